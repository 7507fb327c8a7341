//! Exact inference on small discrete structural causal models.
//!
//! Everything here is computed by full enumeration of the joint assignment
//! space, which makes this module the ground truth the learned components are
//! checked against: observational and interventional distributions, the
//! back-door criterion, back-door adjustment, and the invariance check
//! `P(y | do(m)) = P(y | m)`.

mod format;
mod graph;
mod infer;
mod random;
mod spec;
mod table;

use thiserror::Error;

pub use format::{parse_scm, write_scm};
pub use graph::{ancestors, backdoor_criterion, descendants, is_descendant, Blocker, CriterionReport, PathReport};
pub use infer::{
    backdoor_adjust, backdoor_adjust_with, check_backdoor_condition, do_intervention,
    interventional_oracle, joint_distribution, joint_distribution_with_budget, AdjustOptions,
    Adjustment, ConditionReport, ConditionRow, ZeroStrata, DEFAULT_CELL_BUDGET,
};
pub use random::RandomScm;
pub use spec::{topo_order_indices, Cpt, ScmBuilder, ScmSpec, Variable, CPT_ROW_TOLERANCE};
pub use table::{conditional, total_variation, DistTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("edge {0} -> {1} declared twice")]
    DuplicateEdge(String, String),
    #[error("variable `{0}` has cardinality 0")]
    ZeroCardinality(String),
    #[error("graph has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("no conditional probability table for `{0}`")]
    MissingCpt(String),
    #[error("expected {expected} tables, got {got}")]
    CptCount { expected: usize, got: usize },
    #[error("`{variable}` needs {expected} table rows (one per parent assignment), got {got}")]
    CptRowCount {
        variable: String,
        expected: usize,
        got: usize,
    },
    #[error("`{variable}` row {row} has {got} entries, expected {expected}")]
    CptRowWidth {
        variable: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("`{variable}` row {row} contains invalid probability {value}")]
    InvalidProbability {
        variable: String,
        row: usize,
        value: f64,
    },
    #[error("`{variable}` row {row} sums to {sum}, not 1")]
    CptRowSum {
        variable: String,
        row: usize,
        sum: f64,
    },
    #[error("table over {vars} variables has {cells} cells but {got} probabilities")]
    TableShape { vars: usize, cells: usize, got: usize },
    #[error("joint space has {cells} cells, over the budget of {budget}")]
    BudgetExceeded { cells: usize, budget: usize },
    #[error("value {value} out of range for `{variable}` (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: String,
        value: usize,
        cardinality: usize,
    },
    #[error("P({target} | {given}) is undefined: the conditioning event has probability 0")]
    UndefinedConditional { target: String, given: String },
    #[error("adjustment set may not contain the treatment or outcome (`{0}`)")]
    AdjustmentContainsEndpoint(String),
    #[error("back-door criterion does not hold:\n{0}")]
    CriterionViolated(String),
    #[error("every adjustment stratum has zero probability given {given}")]
    AllStrataZero { given: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
