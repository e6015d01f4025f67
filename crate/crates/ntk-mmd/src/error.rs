use thiserror::Error;

/// Errors for network, kernel, and test-pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("training diverged: non-finite parameter after step {step}")]
    Diverged { step: usize },

    #[error("singular pooled covariance: n - 2 = {dof} degrees of freedom for dimension {dim}")]
    SingularCovariance { dof: usize, dim: usize },

    #[error("ill-posed study: {0}")]
    IllPosed(String),

    #[error("bootstrap draw {draw} failed: {source}")]
    BootstrapDraw {
        draw: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
