//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested moment diverges (the defining integral is infinite).
    #[error("moment of order {m} does not exist for shape {a}")]
    MomentDoesNotExist { a: f64, m: f64 },

    /// An iterative scheme failed to converge within its budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A numerical operation produced an unusable result (e.g. a conditional
    /// precision matrix that stayed indefinite after jitter).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A configuration value failed validation before any work started.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
