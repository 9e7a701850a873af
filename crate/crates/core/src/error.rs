use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Every importance weight underflowed (or the exponents were not finite).
    #[error("degenerate importance weights: {0}")]
    DegenerateWeights(String),

    #[error("optimizer diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
