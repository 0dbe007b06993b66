//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation. `field` names the offending field.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// Adaptive quadrature stopped before meeting its tolerance.
    #[error("quadrature did not converge: value {value:e}, error estimate {error:e} after {intervals} intervals")]
    NotConverged { value: f64, error: f64, intervals: usize },

    /// A series truncation hit its cap before the tail rule was met.
    #[error("series `{series}` needs more than {cap} terms to meet the tail bound")]
    TruncationCap { series: &'static str, cap: usize },

    /// The spectral mask cannot be met by the kernel bank.
    #[error("mask infeasible: {0}")]
    Infeasible(String),

    /// Malformed persisted data.
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { field, reason: reason.into() }
}
