//! Crate-wide error type.
//!
//! Convention: recoverable conditions at API boundaries (file formats,
//! configs, solver non-convergence, invalid construction arguments) return
//! [`Error`]; shape mismatches on numeric hot paths are programmer errors
//! and panic with a descriptive message.

/// Errors surfaced by fallible public APIs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension/shape disagreement detected at an API boundary.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },
    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A byte-level file format could not be decoded.
    #[error("format error: {0}")]
    Format(String),
    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
    /// An iterative solver failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
