//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid range (epsilon, zeta, rates, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Regrowth needs more free positions than the layer has left.
    #[error("regrowth pool exhausted: need {needed} free positions, only {available} available")]
    RegrowthPoolExhausted { needed: usize, available: usize },

    /// Power-law fit is undefined for the given degrees.
    #[error("undefined power-law fit: {0}")]
    UndefinedFit(String),

    /// Brute-force enumeration was requested on a model that is too large.
    #[error("model too large for exact enumeration: {0}")]
    ModelTooLarge(String),

    /// Probability rows passed to the loss do not sum to one.
    #[error("probabilities row {row} sums to {sum}, expected 1 within 1e-6")]
    UnnormalizedProbabilities { row: usize, sum: f64 },

    /// A data file or checkpoint failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
