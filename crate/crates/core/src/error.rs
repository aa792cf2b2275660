use alloc::string::String;
use core::fmt;

use crate::sim::NodeId;

/// Errors produced by the numeric core and the simulators.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Two operands disagree on a dimension.
    Dimension {
        /// What was being compared.
        what: &'static str,
        /// The size the operation needed.
        expected: usize,
        /// The size it got.
        found: usize,
    },
    /// An update produced NaN or an infinity, usually because the learning
    /// rate is too large.
    NumericOverflow,
    /// An update diverged inside a simulation run.
    Diverged {
        /// Node whose profile would have become non-finite.
        node: NodeId,
        /// Simulated time (event engine) or iteration (sequential engines).
        time: f64,
    },
    /// An operation that needs data got none.
    EmptyInput(&'static str),
    /// An argument is outside its valid range.
    Argument(String),
    /// A configuration is invalid or internally inconsistent.
    Config(String),
    /// Synthetic generation kept producing a constant matrix.
    Degenerate,
}

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    /// Short machine-readable category, used as an error prefix by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::NumericOverflow | Error::Diverged { .. } => "numeric-overflow",
            Error::EmptyInput(_) => "empty-input",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Error::NumericOverflow => f.write_str("update produced a non-finite value"),
            Error::Diverged { node, time } => {
                write!(f, "profile of {node} diverged at t={time}")
            }
            Error::EmptyInput(what) => write!(f, "{what} is empty"),
            Error::Argument(msg) | Error::Config(msg) => f.write_str(msg),
            Error::Degenerate => {
                f.write_str("synthetic generator produced a constant matrix on every attempt")
            }
        }
    }
}

impl core::error::Error for Error {}
