use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite log-evidence while optimizing column {column}")]
    NonFiniteEvidence { column: usize },

    #[error("pose ({x:.3}, {y:.3}) is not valid here: {reason}")]
    InvalidPose { x: f64, y: f64, reason: &'static str },

    #[error("filter diverged: all particle weights vanished")]
    FilterDivergence,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("alphabet mismatch: model hash {expected}, prior hash {actual}")]
    AlphabetMismatch { expected: String, actual: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
