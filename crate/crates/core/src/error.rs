use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the mathematical domain of an operation (zero norm, non-positive temperature).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite or otherwise unusable values.
    #[error("value error: {0}")]
    Value(String),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("lookup error: {0}")]
    Lookup(String),

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training diverged at epoch {epoch}: loss {loss} exceeds 10x the initial loss {initial}")]
    Divergence { epoch: usize, loss: f64, initial: f64 },

    #[error("clean set for {direction} is empty; increase top-k or the number of phase-one epochs")]
    EmptyCleanSet { direction: String },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised while optimizing parameters.
    pub fn is_training(&self) -> bool {
        matches!(self, Error::NonFiniteGradient { .. } | Error::Divergence { .. })
    }
}

pub(crate) fn shape_err(what: &str, expected: usize, got: usize) -> Error {
    Error::Shape(format!("{what}: expected {expected}, got {got}"))
}
