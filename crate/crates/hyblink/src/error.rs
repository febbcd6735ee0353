//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the hyblink library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition (non-finite value, out-of-range argument, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A persisted dataset could not be parsed.
    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    /// A persisted model container could not be parsed.
    #[error("model format error: {0}")]
    ModelFormat(String),

    /// A model was used for inference before training.
    #[error("model is not trained: {0}")]
    Untrained(&'static str),

    /// The transmission protocol was violated (e.g. Bob demodulating without
    /// the jamming pattern).
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
