//! Dense `f64` tensors, a reverse-mode tape, and first-order optimizers.

mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_in_place;

use thiserror::Error;

/// Layer normalization epsilon used throughout the encoder.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
}

/// Softmax of a slice, max-subtracted.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}
