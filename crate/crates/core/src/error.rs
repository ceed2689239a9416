use thiserror::Error;

/// Errors produced by the estimation, recovery and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The biased error variance reached the reference variance with
    /// clamping disabled, so the unbiasing factor is singular or flips sign.
    #[error("singular unbiasing: biased variance {variance} >= reference variance {reference}")]
    SingularUnbias { variance: f64, reference: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
