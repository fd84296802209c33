//! Kernel two-sample and likelihood-free hypothesis testing.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod inference;
pub mod kernels;
pub mod rng;
pub mod stats;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::RandomSource;
