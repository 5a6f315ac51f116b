use thiserror::Error;

/// Errors produced by the navigation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A malformed action list or token.
    #[error("format error: {0}")]
    Format(String),

    /// Internal bookkeeping went out of sync (missing frame, bad index).
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    /// Failure talking to an external agent process.
    #[error("bridge error: {0}")]
    Bridge(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
