//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records each operation as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the tape once in reverse and
//! returns gradients for every node that was recorded with
//! [`Tape::param`] (or depends on one). [`AdamState`] consumes those
//! gradients to update parameter tensors in place.

mod adam;
mod tape;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use adam::AdamState;
pub use tape::{logsumexp, sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("tensor {rows}x{cols} cannot hold {len} values")]
    BadData { rows: usize, cols: usize, len: usize },
    #[error("{op}: range {start}..{end} out of bounds for shape {shape:?}")]
    BadSlice {
        op: &'static str,
        start: usize,
        end: usize,
        shape: (usize, usize),
    },
    #[error("log of non-positive value {0}")]
    NonPositiveLog(f64),
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("optimizer tracks {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}

/// Uniform Glorot initialization, `U[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-s..=s))
}
