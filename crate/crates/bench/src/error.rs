use cfo_core::CfoError;
use thiserror::Error;

/// Harness failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numeric(_) => 3,
            BenchError::Io { .. } | BenchError::Format { .. } => 4,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        BenchError::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}

impl From<CfoError> for BenchError {
    fn from(e: CfoError) -> Self {
        match e {
            CfoError::InvalidArgument(_) | CfoError::OutOfRange { .. } => BenchError::Config(e.to_string()),
            _ => BenchError::Numeric(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
