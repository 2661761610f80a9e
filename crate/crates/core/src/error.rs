use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("frame sequence gap: expected frame index {expected} in {}", dir.display())]
    SequenceGap { dir: PathBuf, expected: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("window contains no feature vectors")]
    EmptyWindow,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("class {class} has {count} samples, at least {required} required")]
    InsufficientData {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("incompatible artifacts: {0}")]
    Compatibility(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
