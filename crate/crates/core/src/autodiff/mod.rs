//! Dense tensors with a reverse-mode gradient tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves are registered
//! with [`Tape::param`] (gradient wanted) or [`Tape::constant`], operations
//! return [`Var`] handles, and a single [`Tape::backward`] call produces a
//! [`Gradients`] map. Any non-finite intermediate aborts with an error.

mod check;
mod tape;
mod tensor;

pub use check::{finite_diff_check, FdReport, REL_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::matmul_raw;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("backward already ran on this tape")]
    BackwardConsumed,
    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),
    #[error("index {index} out of range for {len} columns")]
    Index { index: usize, len: usize },
}
