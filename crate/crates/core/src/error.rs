use thiserror::Error;

/// Errors raised by the pricing, quoting and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is non-finite or violates a type invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The root bracket was exhausted without meeting the tolerance.
    #[error("bracket exhausted: {0}")]
    BracketExhausted(String),

    /// A finite-difference bump is too small to resolve the derivative.
    #[error("bump too small: {0}")]
    BumpTooSmall(String),

    /// A grid lacks the cells needed for a diagnostic.
    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(name: &str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be >= 0, got {value}")))
    }
}
