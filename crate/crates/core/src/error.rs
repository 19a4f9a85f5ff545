use std::path::PathBuf;

use crate::bridge::ProtocolError;
use crate::tensor::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: Shape,
        found: Shape,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain violation in {context}: entry {index} = {value}")]
    Domain {
        context: &'static str,
        index: usize,
        value: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("chain diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("quadrature mass underflow")]
    MassUnderflow,

    #[error("could not parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
