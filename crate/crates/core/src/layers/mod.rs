//! Linear, MLP, multi-head self-attention and LSTM blocks.
//!
//! Layers are stateless descriptions: they own parameter *names*, and read
//! the tensors from a [`BoundParams`] at forward time.

mod attention;
mod linear;
mod lstm;
mod params;

pub use attention::MultiHeadSelfAttention;
pub use linear::{Activation, Linear, Mlp};
pub use lstm::LstmStack;
pub use params::{check_registry_gradients, count_params, init_params, BoundParams, Init, ParamRegistry, ParamSpec};

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("invalid dimension: {0}")]
    InvalidDim(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
