//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records a dynamic computation graph (rebuilt every forward
//! pass), [`Tape::backward`] replays it in reverse to populate gradients,
//! and [`Adam`] applies the standard bias-corrected update. The operation
//! set is deliberately small; everything else in the crate is composed
//! from it.

mod adam;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckError};
pub use kernels::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc};
pub use tape::{harvest_grads, leaf_vars, Tape, Var};
pub use tensor::Tensor;

use core::fmt;

/// Errors surfaced by the autodiff contract checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdError {
    /// `backward` called on a tensor with more than one element.
    NonScalarRoot,
    /// A `Var` from a different tape was passed in.
    NotOnTape,
    /// An optimizer step found a parameter with `requires_grad` but no
    /// populated gradient.
    MissingGrad,
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::NonScalarRoot => write!(f, "backward root must be a scalar"),
            AdError::NotOnTape => write!(f, "tensor does not belong to this tape"),
            AdError::MissingGrad => write!(f, "parameter requires grad but none is populated"),
        }
    }
}
