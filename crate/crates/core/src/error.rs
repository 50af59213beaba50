use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can surface.
#[derive(Debug, Error)]
pub enum EsclError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("malformed {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
}

impl EsclError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EsclError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            EsclError::Config(_) => 1,
            EsclError::Numeric(_) => 3,
            EsclError::Dimension(_)
            | EsclError::Degenerate(_)
            | EsclError::Input(_)
            | EsclError::Parse { .. }
            | EsclError::Io { .. }
            | EsclError::Checkpoint(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, EsclError>;
