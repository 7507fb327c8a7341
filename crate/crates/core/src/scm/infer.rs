use std::fmt;

use super::graph::{backdoor_criterion, CriterionReport};
use super::table::{conditional, format_given, total_variation, DistTable};
use super::{Cpt, ScmError, ScmSpec};

/// Default ceiling on the number of joint cells enumerated exactly.
pub const DEFAULT_CELL_BUDGET: usize = 10_000_000;

/// Exact joint distribution by enumeration of `∏ P(v | pa(v))`.
pub fn joint_distribution(scm: &ScmSpec) -> Result<DistTable, ScmError> {
    joint_distribution_with_budget(scm, DEFAULT_CELL_BUDGET)
}

pub fn joint_distribution_with_budget(scm: &ScmSpec, budget: usize) -> Result<DistTable, ScmError> {
    let cells = scm.joint_cells();
    if cells > budget {
        return Err(ScmError::BudgetExceeded { cells, budget });
    }
    let vars: Vec<String> = scm.variables().iter().map(|v| v.name.clone()).collect();
    let cards: Vec<usize> = scm.variables().iter().map(|v| v.cardinality).collect();
    let mut probs = vec![0.0; cells];
    let mut assign = vec![0usize; cards.len()];
    let topo = scm.topo_indices();
    for (cell, p) in probs.iter_mut().enumerate() {
        let mut rest = cell;
        for (slot, &c) in assign.iter_mut().zip(&cards).rev() {
            *slot = rest % c;
            rest /= c;
        }
        let mut acc = 1.0;
        for &v in topo {
            acc *= scm.cpt_row(v, &assign)[assign[v]];
            if acc == 0.0 {
                break;
            }
        }
        *p = acc;
    }
    DistTable::new(vars, cards, probs)
}

/// Graph mutilation: drop every edge into `var` and pin it to `value`.
/// All other tables are carried over unchanged.
pub fn do_intervention(scm: &ScmSpec, var: &str, value: usize) -> Result<ScmSpec, ScmError> {
    let vi = scm.index_of(var)?;
    let card = scm.cardinality(vi);
    if value >= card {
        return Err(ScmError::ValueOutOfRange {
            variable: var.to_string(),
            value,
            cardinality: card,
        });
    }
    let edges: Vec<(usize, usize)> = scm
        .edge_indices()
        .iter()
        .copied()
        .filter(|&(_, c)| c != vi)
        .collect();
    let mut cpts: Vec<Cpt> = scm.cpts().to_vec();
    let mut point = vec![0.0; card];
    point[value] = 1.0;
    cpts[vi] = Cpt {
        parents: Vec::new(),
        rows: vec![point],
    };
    // removing edges cannot create a cycle, so the old order is still valid,
    // but recompute for the tie-break contract
    let names: Vec<&str> = scm.variables().iter().map(|v| v.name.as_str()).collect();
    let topo = super::spec::topo_order_indices(&names, &edges)?;
    Ok(ScmSpec::from_parts_unchecked(
        scm.variables().to_vec(),
        edges,
        cpts,
        topo,
    ))
}

/// Ground truth `P(y | do(x = x_val))`: marginalize `y` in the mutilated model.
pub fn interventional_oracle(
    scm: &ScmSpec,
    x: &str,
    x_val: usize,
    y: &str,
) -> Result<Vec<f64>, ScmError> {
    let mutilated = do_intervention(scm, x, x_val)?;
    let joint = joint_distribution(&mutilated)?;
    Ok(joint.marginal(&[y])?.probs().to_vec())
}

/// How [`backdoor_adjust`] treats strata `d` with `P(x_val, d) = 0`, where the
/// observational `P(y | x_val, d)` is undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroStrata {
    /// Evaluate the stratum in the model itself, as `P(y | do(x_val), d)`.
    #[default]
    Structural,
    /// Drop the stratum and renormalize `P(d)` over the rest.
    SkipRenormalize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdjustOptions {
    /// Refuse to adjust when the back-door criterion fails.
    pub check_criterion: bool,
    pub zero_strata: ZeroStrata,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        Self {
            check_criterion: true,
            zero_strata: ZeroStrata::Structural,
        }
    }
}

impl AdjustOptions {
    pub fn unchecked() -> Self {
        Self {
            check_criterion: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adjustment {
    pub distribution: Vec<f64>,
    /// Strata values of the adjustment variable with zero joint support for `x_val`.
    pub zero_strata: Vec<usize>,
}

/// `Σ_d P(y | x = x_val, d) · P(d)`.
pub fn backdoor_adjust(
    scm: &ScmSpec,
    x: &str,
    x_val: usize,
    y: &str,
    adj: &str,
) -> Result<Vec<f64>, ScmError> {
    Ok(backdoor_adjust_with(scm, x, x_val, y, adj, AdjustOptions::default())?.distribution)
}

pub fn backdoor_adjust_with(
    scm: &ScmSpec,
    x: &str,
    x_val: usize,
    y: &str,
    adj: &str,
    opts: AdjustOptions,
) -> Result<Adjustment, ScmError> {
    let report = backdoor_criterion(scm, x, y, &[adj])?;
    if opts.check_criterion && !report.holds {
        return Err(ScmError::CriterionViolated(report.to_string()));
    }
    let joint = joint_distribution(scm)?;
    adjust_on_joint(scm, &joint, x, x_val, y, adj, opts.zero_strata)
}

fn adjust_on_joint(
    scm: &ScmSpec,
    joint: &DistTable,
    x: &str,
    x_val: usize,
    y: &str,
    adj: &str,
    policy: ZeroStrata,
) -> Result<Adjustment, ScmError> {
    let xi = joint.position(x)?;
    if x_val >= joint.cards()[xi] {
        return Err(ScmError::ValueOutOfRange {
            variable: x.to_string(),
            value: x_val,
            cardinality: joint.cards()[xi],
        });
    }
    let y_card = joint.cards()[joint.position(y)?];
    let p_adj = joint.marginal(&[adj])?;
    let xd = joint.marginal(&[x, adj])?;

    let mut out = vec![0.0; y_card];
    let mut weight = 0.0;
    let mut zero = Vec::new();
    let mut mutilated_joint = None;
    for (d, &pd) in p_adj.probs().iter().enumerate() {
        if pd == 0.0 {
            continue;
        }
        let stratum = if xd.get(&[x_val, d]) > 0.0 {
            conditional(joint, y, &[(x, x_val), (adj, d)])?
        } else {
            zero.push(d);
            match policy {
                ZeroStrata::SkipRenormalize => continue,
                ZeroStrata::Structural => {
                    if mutilated_joint.is_none() {
                        mutilated_joint = Some(joint_distribution(&do_intervention(scm, x, x_val)?)?);
                    }
                    let mj = mutilated_joint.as_ref().expect("just set");
                    conditional(mj, y, &[(adj, d)])?
                }
            }
        };
        for (o, s) in out.iter_mut().zip(&stratum) {
            *o += pd * s;
        }
        weight += pd;
    }
    if weight <= 0.0 {
        return Err(ScmError::AllStrataZero {
            given: format_given(&[(x, x_val)]),
        });
    }
    out.iter_mut().for_each(|p| *p /= weight);
    Ok(Adjustment {
        distribution: out,
        zero_strata: zero,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRow {
    pub m_value: usize,
    /// `P(y | m)`.
    pub observational: Vec<f64>,
    /// `Σ_d P(y | m, d) P(d)`.
    pub adjusted: Vec<f64>,
    pub tv_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub holds: bool,
    pub eps: f64,
    pub max_deviation: f64,
    /// Value of `m` attaining the maximum deviation.
    pub argmax: Option<usize>,
    pub rows: Vec<ConditionRow>,
    /// The back-door criterion for `(m, y, {adj})`, reported for context.
    pub criterion: CriterionReport,
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(
                f,
                "m={}  P(Y|M)={:?}  P(Y|do(M))={:?}  tv={:.12}",
                row.m_value, row.observational, row.adjusted, row.tv_distance
            )?;
        }
        writeln!(f, "max deviation {:.12}", self.max_deviation)?;
        if self.holds {
            writeln!(f, "backdoor condition holds (eps={:e})", self.eps)
        } else {
            writeln!(f, "backdoor condition violated (eps={:e})", self.eps)
        }
    }
}

/// Checks `P(y | do(m)) = P(y | m)` for every value of `m` with positive mass.
///
/// The adjusted side is computed by the adjustment formula whether or not the
/// criterion holds; the criterion verdict is attached to the report.
pub fn check_backdoor_condition(
    scm: &ScmSpec,
    m: &str,
    y: &str,
    adj: &str,
    eps: f64,
) -> Result<ConditionReport, ScmError> {
    let criterion = backdoor_criterion(scm, m, y, &[adj])?;
    let joint = joint_distribution(scm)?;
    let p_m = joint.marginal(&[m])?;
    let mut rows = Vec::new();
    let mut max_deviation = 0.0;
    let mut argmax = None;
    for (mv, &pm) in p_m.probs().iter().enumerate() {
        if pm <= 0.0 {
            continue;
        }
        let observational = conditional(&joint, y, &[(m, mv)])?;
        let adjusted = adjust_on_joint(scm, &joint, m, mv, y, adj, ZeroStrata::Structural)?.distribution;
        let tv = total_variation(&observational, &adjusted);
        if argmax.is_none() || tv > max_deviation {
            max_deviation = tv;
            argmax = Some(mv);
        }
        rows.push(ConditionRow {
            m_value: mv,
            observational,
            adjusted,
            tv_distance: tv,
        });
    }
    Ok(ConditionReport {
        holds: max_deviation <= eps,
        eps,
        max_deviation,
        argmax,
        rows,
        criterion,
    })
}
