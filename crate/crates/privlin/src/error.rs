use std::path::PathBuf;

use privlin_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("timed out after {0} s")]
    Timeout(f64),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 usage, 3 budget exceeded, 4 capacity or timeout, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Timeout(_) => 4,
            CliError::Core(e) => match e {
                CoreError::BudgetExceeded { .. } => 3,
                CoreError::Capacity { .. } => 4,
                CoreError::Config(_) | CoreError::InvalidArgument(_) | CoreError::UnknownAttribute(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Format { .. } => 1,
        }
    }
}
