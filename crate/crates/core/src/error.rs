use thiserror::Error;

/// Errors raised while constructing or evaluating teleportation protocols.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("completeness violated: residual {residual:e} exceeds {threshold:e}")]
    Incomplete { residual: f64, threshold: f64 },

    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("input ensemble is empty")]
    EmptyEnsemble,

    #[error("unknown closed-form oracle `{0}`")]
    UnknownOracle(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
