use thiserror::Error;

use crate::dynamics::TrajectoryRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a named constraint.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("unsupported exponent {0}: finite exponents must be even integers >= 2")]
    UnsupportedExponent(f64),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// Time step exceeds the explicit transport stability ceiling.
    #[error("time step {dt} exceeds stability ceiling {ceiling} at t = {time}")]
    StabilityCeiling { dt: f64, ceiling: f64, time: f64 },

    /// Non-finite state detected; `time` is the last time with a finite state.
    #[error("blow-up detected after t = {time}")]
    BlowUp {
        time: f64,
        partial: Option<Box<TrajectoryRecord>>,
    },

    #[error("invalid ladder: {0}")]
    Ladder(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for errors caused by invalid user input (bad configuration,
    /// violated constraints, malformed ladders).
    pub fn is_constraint(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Ladder(_)
                | Error::StabilityCeiling { .. }
                | Error::UnsupportedExponent(_)
                | Error::OutOfRange(_)
        )
    }
}
