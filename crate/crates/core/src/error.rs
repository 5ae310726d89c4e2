use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by external model capabilities.
#[derive(Debug, Error)]
pub enum ProviderError {
    /// Network or server-side failure; the call may be retried.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The provider answered but produced nothing usable.
    #[error("generation failed: {0}")]
    Generation(String),
    /// The request violated a provider precondition.
    #[error("invalid provider input: {0}")]
    Input(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("instance too large: {0}")]
    Size(String),
    #[error("tag {0:?} is not registered in the equivalence index")]
    UnknownTag(String),
    #[error("tagging failed: {0}")]
    Tagging(String),
    #[error("scoring failed: {0}")]
    Scoring(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
