use thiserror::Error;

/// Errors raised across the medium, solver and correlation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate medium: {0}")]
    DegenerateMedium(String),

    #[error("near-singular transport: anisotropy g = {g} is too close to 1")]
    NearSingularTransport { g: f64 },

    #[error("numerical failure: {message} (residual {residual:e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::NumericalFailure { message: msg.into(), residual }
    }
}
