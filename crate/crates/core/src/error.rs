use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KnfError>;

#[derive(Debug, Error)]
pub enum KnfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("checkpoint format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KnfError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        KnfError::Dimension(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        KnfError::Numeric(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        KnfError::Argument(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// shape or the environment.
    pub fn is_numeric(&self) -> bool {
        matches!(self, KnfError::Numeric(_) | KnfError::Diverged { .. })
    }
}
