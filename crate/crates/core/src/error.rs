use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size {h} outside (0, 1): increment truncation undefined")]
    StepSizeRange { h: f64 },

    #[error("Newton iteration failed to converge at stage {stage}: residual {residual:.3e} after {iters} iterations")]
    NewtonDivergence {
        stage: usize,
        iters: usize,
        residual: f64,
    },

    #[error("singular Newton matrix at stage {stage}")]
    SingularNewtonMatrix { stage: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("coordinate chart domain violation: {0}")]
    ChartDomain(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
