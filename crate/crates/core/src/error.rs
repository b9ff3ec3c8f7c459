use std::io;

use thiserror::Error;

/// Errors produced by configuration validation, analysis and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid burst degree {0}: degrees must be at least 1")]
    ZeroDegree(u32),

    #[error("burst degree {0} appears more than once")]
    DuplicateDegree(u32),

    #[error("degree probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),

    #[error("degree probability {0} is negative or not finite")]
    NegativeProbability(f64),

    #[error("degree distribution has no entries")]
    EmptyDistribution,

    #[error("maximum burst degree {degree} exceeds frame size {frame_size}")]
    DegreeExceedsFrame { degree: u32, frame_size: usize },

    #[error("invalid {name}: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid load grid: {0}")]
    InvalidGrid(String),

    #[error("invalid window [{from}, {to}) for a trace of {len} frames")]
    InvalidWindow { from: usize, to: usize, len: usize },

    #[error("no operating point: the channel is overloaded")]
    NoOperatingPoint,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    /// Whether the error stems from bad input data rather than I/O or the
    /// channel's own behaviour.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::NoOperatingPoint)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
