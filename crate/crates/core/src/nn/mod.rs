//! Dense f64 tensors with hand-written forward and backward passes.
//!
//! There is no tape: callers keep whatever forward values a backward pass
//! needs and accumulate parameter gradients into a structure of the same
//! type as the parameters themselves (see [`Parameters`]).

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod tensor;

use thiserror::Error;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, parse_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, grad_check_fn, GradCheckReport};
pub use layers::{
    ce_on_probs, embedding_backward, embedding_lookup, linear, linear_backward, mean_pool,
    mean_pool_backward, relu, relu_backward, softmax_ce, softmax_rows, tanh, tanh_backward,
    ClampCounter, PROB_FLOOR,
};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor data has {got} values but shape {shape:?} needs {expected}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("id {id} out of range for a table of {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("checkpoint tensor `{name}` has shape {got:?}, expected {expected:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint tensor set differs: missing [{}], unexpected [{}]", missing.join(", "), unexpected.join(", "))]
    CheckpointNames {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
}

/// A fixed, ordered collection of named tensors.
///
/// Gradients use the same type, so `zeros_like` gives an accumulator and
/// optimizers can walk parameters and gradients in lockstep.
pub trait Parameters: Clone {
    fn named(&self) -> Vec<(String, &Tensor)>;
    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Adds `other` elementwise; both must come from the same configuration.
    fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.add_assign(b);
        }
    }
}
