use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample too small: {what} needs at least {needed} points, got {got}")]
    SampleTooSmall {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("sample size mismatch: {0}")]
    SizeMismatch(String),
    #[error("incompatible points: {0}")]
    IncompatiblePoints(String),
    #[error("insufficient data: requested {requested} points from a pool of {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("calibration data overlaps evaluation data")]
    CalibrationOverlap,
    #[error("degenerate computation: {0}")]
    Degenerate(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
