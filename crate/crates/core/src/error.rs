use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("insufficient history: need {needed} states, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("energy identity violated at level {level}: relative residual {residual:e}")]
    IdentityViolated { level: u32, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by a bad run description rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidMesh(_) | Error::Unsupported(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
