//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong in the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix or vector shapes do not agree; carries both shapes.
    Dimension {
        op: &'static str,
        expected: String,
        actual: String,
    },
    /// An argument is outside its documented domain.
    Parameter(String),
    /// A non-finite value showed up where finite math was required.
    Numeric(String),
    /// A model/bag/layout combination that cannot be run.
    Config(String),
    /// Malformed encoded bytes; `offset` is where decoding gave up.
    Format { offset: usize, message: String },
    /// An API was driven out of order (e.g. backward with a stale trace).
    Usage(String),
    /// A metric has no defined value on this input.
    UndefinedMetric(String),
}

impl Error {
    pub fn dimension(op: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn parameter(message: impl Into<String>) -> Self {
        Error::Parameter(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, expected, actual } => {
                write!(f, "{op}: dimension mismatch, expected {expected}, got {actual}")
            }
            Error::Parameter(m) => write!(f, "invalid parameter: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Usage(m) => write!(f, "usage error: {m}"),
            Error::UndefinedMetric(m) => write!(f, "metric undefined: {m}"),
        }
    }
}

impl core::error::Error for Error {}
