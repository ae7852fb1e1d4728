use thiserror::Error;

/// Errors raised by solvers, validators and instance parsing.
#[derive(Debug, Error)]
pub enum SplitError {
    /// An argument lies outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An algorithmic invariant failed; indicates a bug or a corrupted instance.
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("invalid rational literal `{0}`")]
    ParseRational(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SplitError> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(SplitError::Domain(msg.into()))
}
