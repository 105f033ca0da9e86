use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum EcdError {
    #[error("degenerate prior: weights must contain at least one positive entry")]
    DegeneratePrior,

    #[error("invalid prior weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("empty version space: observations are inconsistent with every hypothesis")]
    EmptyVersionSpace,

    #[error("test {0} observed twice")]
    RepeatedTest(usize),

    #[error("unknown test index {0}")]
    UnknownTest(usize),

    #[error("unknown hypothesis index {0}")]
    UnknownHypothesis(usize),

    #[error("unknown identifier `{0}`")]
    UnknownId(String),

    #[error(
        "identifiability violated: support points ({h1}, θ{theta1}) and ({h2}, θ{theta2}) share an outcome vector"
    )]
    Identifiability {
        h1: String,
        theta1: usize,
        h2: String,
        theta2: usize,
    },

    #[error("invalid noisy model: {0}")]
    InvalidModel(String),

    #[error("policy stalled: run for truth {truth} ended without reaching a terminal version space")]
    PolicyStalled { truth: String },

    #[error("instance too large for exact search: {0}; compare against sampled policy costs instead")]
    OracleTooLarge(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("posterior collapse: total mass {0:e} underflowed")]
    PosteriorCollapse(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EcdError> = std::result::Result<T, E>;
