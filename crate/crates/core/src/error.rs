use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed raster header: {0}")]
    Format(String),

    #[error("corrupt raster payload: {0}")]
    Corruption(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("non-finite loss at step {step} (epoch {epoch}); batch snapshot written to {snapshot:?}")]
    NonFiniteLoss {
        step: u64,
        epoch: u32,
        snapshot: Option<PathBuf>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for internal failures, 2 for usage and input errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } | Error::Internal(_) => 1,
            _ => 2,
        }
    }
}
