use thiserror::Error;

/// Errors produced by the design, filtering and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameter {theta:?} lies outside the prior support")]
    OutOfSupport { theta: Vec<f64> },
    #[error("unknown example model `{0}`")]
    UnknownModel(String),
    #[error("unknown override `{key}` for model `{model}`")]
    UnknownOverride { model: String, key: String },
    #[error("quadrature scheme `{scheme}` cannot discretize a {prior} prior")]
    IncompatibleScheme { scheme: String, prior: String },
    #[error("oracle size guard exceeded: {0}")]
    GuardExceeded(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-finite gradient component {index}")]
    NonFiniteGradient { index: usize },
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<DesignError>,
    },
}

pub type Result<T> = std::result::Result<T, DesignError>;
