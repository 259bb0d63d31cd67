//! Purified learning: a small, self-contained implementation of adversarial
//! suppression of task-irrelevant features.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the double-precision types the training
//! pipeline and CLI use.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod data;
pub mod linalg;
pub mod nn;
pub mod objectives;
pub mod optimizers;
pub mod otoracle;
pub mod scalar;
pub mod train;

pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type ModelParams = nn::ModelParams<f64>;
