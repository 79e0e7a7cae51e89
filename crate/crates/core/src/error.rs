use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller violated a precondition (shape, range, ordering).
    #[error("usage error: {0}")]
    Usage(String),

    /// A tape node produced a NaN or infinite value.
    #[error("non-finite value at tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    /// Plain numeric failure outside the tape (decoder input, densities, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A received-signal covariance was not positive definite.
    #[error("covariance of batch sample {index} is not positive definite")]
    NotPositiveDefinite { index: usize },

    /// The requested model combination has no implementation.
    #[error("unsupported model: {0}")]
    Unsupported(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {cause}")]
    Diverged {
        epoch: usize,
        batch: usize,
        cause: String,
        /// Completed epochs before the failure.
        trace: Vec<crate::training::EpochRecord>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
