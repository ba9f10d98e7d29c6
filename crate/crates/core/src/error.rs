use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("index {index} out of range (valid 1..={len})")]
    Index { index: usize, len: usize },

    #[error("integration step {step}: non-finite velocity")]
    NonFiniteVelocity { step: usize },

    #[error("optimizer iteration {iteration}: non-finite loss")]
    NonFiniteLoss { iteration: usize },

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
