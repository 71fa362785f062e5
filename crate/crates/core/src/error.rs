use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("site index {site} out of range for a chain of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not a density matrix: {0}")]
    InvalidState(String),

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("Bell outcome {outcome} has probability {probability:e}; Bob's state is undefined")]
    OutcomeImpossible { outcome: &'static str, probability: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("sweep point {parameter} = {value}: {source}")]
    SweepPoint {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True when the error (or the error wrapped by a sweep point) is a
    /// failed numerical cross-check rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalConsistency(_) | Error::Eigen(_) => true,
            Error::SweepPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
