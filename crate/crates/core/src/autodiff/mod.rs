//! Dense `f64` tensors with a define-by-run reverse-mode tape.
//!
//! Every forward pass records onto a fresh [`Tape`]; [`Tape::backward`] then
//! sweeps the record in reverse. Shapes must match exactly for binary ops,
//! except that a single-element operand broadcasts against anything.

mod gradcheck;
mod graph;
mod kernels;
mod ops;
mod tensor;

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use graph::{Gradients, Tape, Var};
pub use ops::{concat, stack};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} elements")]
    ElementCount { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for a {ndim}-dimensional tensor")]
    InvalidAxis { axis: usize, ndim: usize },
    #[error("index {index} out of range along axis {axis} of length {dim}")]
    OutOfRange { axis: usize, index: usize, dim: usize },
    #[error("mean over an empty slice")]
    EmptyReduction,
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty graph")]
    EmptyGraph,
}

#[cfg(test)]
mod tests;
