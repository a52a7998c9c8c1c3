//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, inference, simulation and ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a precondition (empty sample, non-finite value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent with another.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation was called before its prerequisites were computed.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A numerical check failed (degenerate variance, imaginary residual, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A CSV column named in the schema is absent or a unit id repeats.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error is a user-facing validation problem, as opposed to
    /// a numerical failure discovered mid-computation. The CLI maps the
    /// former to exit code 1 and the latter to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidConfig(_)
                | Error::Schema(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
