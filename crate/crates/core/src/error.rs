//! Library error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter violated a construction invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// The configuration is valid but the operation does not support it.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The exact solver would need more work than the configured budget.
    #[error("capacity exceeded: problem size {size} is above the budget of {budget}")]
    Capacity { size: u128, budget: u128 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A policy produced an action that breaks the off-count limit or has the wrong length.
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("corrupt solution dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::Capacity { .. } => 3,
            Error::Consistency(_) => 4,
            _ => 1,
        }
    }
}
