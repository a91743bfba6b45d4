use thiserror::Error;

pub type Result<T> = std::result::Result<T, OfbmError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OfbmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("numerical failure: {message} (achieved error estimate {achieved:e})")]
    NumericalFailure { message: String, achieved: f64 },

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl OfbmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OfbmError::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        OfbmError::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, achieved: f64) -> Self {
        OfbmError::NumericalFailure {
            message: msg.into(),
            achieved,
        }
    }
}
