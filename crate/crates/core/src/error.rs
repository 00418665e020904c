use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RtmError {
    /// A model parameter or argument lies outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample too small: got {got} subjects, need at least {min}")]
    SampleSize { got: usize, min: usize },

    /// A sample statistic is undefined (e.g. zero variance in a column).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// Blomqvist correction with a within-subject variance that is not
    /// smaller than the observed baseline variance.
    #[error("estimated signal variance non-positive (delta2 = {delta2}, var_x1 = {var_x1})")]
    Singular { delta2: f64, var_x1: f64 },

    #[error("inference failed: {0}")]
    InferenceFailure(String),

    /// An operation was called with an incompatible configuration.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),
}

pub type Result<T> = std::result::Result<T, RtmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> RtmError {
    RtmError::InvalidParameter(msg.into())
}
