use std::io;

use thiserror::Error;

/// Errors produced anywhere in the training library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("bad IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX payload: header declares {expected} bytes, only {available} present")]
    Truncated { expected: usize, available: usize },

    #[error("label {0} is outside 0..=9")]
    LabelOutOfRange(u32),

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("schedule rate {rate} is not positive at t = {t} epochs")]
    InvalidSchedule { t: f64, rate: f64 },

    #[error("non-increasing trace time: {t} after {last}")]
    NonIncreasingTime { t: f64, last: f64 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
