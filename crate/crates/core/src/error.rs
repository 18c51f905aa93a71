use thiserror::Error;

/// Errors raised by simulation, measurement, and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not physical: {0}")]
    NotPhysical(String),

    #[error("probability {value} at outcome {outcome} of basis n={basis} is negative beyond roundoff")]
    NegativeProbability { basis: usize, outcome: usize, value: f64 },

    #[error("amplitude reached the lattice wrap site (up, {site}) before step {step}")]
    WrapPopulated { step: usize, site: usize },

    #[error("ancilla enumeration over 2^{m_a} configurations refused (limit 2^{limit})")]
    EnumerationTooLarge { m_a: usize, limit: usize },

    #[error("missing basis n={0}")]
    MissingBasis(usize),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
