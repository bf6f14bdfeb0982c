use alloc::string::String;

use thiserror::Error;

/// Errors raised anywhere in the core crate.
///
/// `BudgetExceeded` is the only variant a plan is expected to catch and
/// recover from; its presence depends only on public request parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("capacity exceeded: {what} needs {requested} bytes, cap is {cap} bytes")]
    Capacity {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown source {0}")]
    Lineage(u32),

    #[error("type error: {0}")]
    Type(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("privacy budget exceeded on source {source_id}: requested {requested}")]
    BudgetExceeded { source_id: u32, requested: String },

    #[error("query is not supported by the strategy matrix (residual {residual:e})")]
    Support { residual: f64 },

    #[error("row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_budget_exceeded(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;
