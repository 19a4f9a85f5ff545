//! Plug-and-play Langevin samplers for Poisson inverse problems.
// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod kernel;
pub mod mirror;
pub mod operator;
pub mod oracle;
pub mod poisson;
pub mod potential;
pub mod priors;
pub mod samplers;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ImageTensor, Shape};
