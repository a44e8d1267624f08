use thiserror::Error;

/// Errors raised by the spectral toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty row")]
    EmptyRow,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate posterior bin {0}")]
    DegeneratePosteriorBin(usize),

    #[error("zero denominator at bin {0}")]
    ZeroDenominator(usize),

    #[error("division by zero noise at step {0}")]
    DivisionByZeroNoise(usize),

    #[error("need at least two samples")]
    TooFewSamples,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid starting point: loss is {0}")]
    InvalidStartingPoint(f64),

    #[error("diverged at step {0}")]
    Diverged(usize),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
