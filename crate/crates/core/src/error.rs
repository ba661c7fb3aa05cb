use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation at a singular point {point:?}")]
    Domain { point: Vec<f64> },

    #[error("jacobian evaluation failed at {at:?}: {reason}")]
    Jacobian { at: Vec<f64>, reason: String },

    #[error("quadrature failed at parameter {param}: {reason}")]
    Quadrature { param: f64, reason: String },

    #[error("trajectory diverged at time {time} (|x| = {magnitude:e})")]
    Divergence { time: f64, magnitude: f64 },

    #[error("all {samples} sampled denominators were degenerate")]
    DegenerateSampling { samples: usize },

    #[error("embedding is rank deficient (smallest singular value {min_singular:e})")]
    DegenerateEmbedding { min_singular: f64 },

    #[error("loop does not close: endpoint gap {gap:e}")]
    Topology { gap: f64 },

    #[error("no fixed Liouville class for ratio a = 1 (symplectic case)")]
    NoFixedClass,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("no intersection found on a {samples}-point grid")]
    NoIntersection { samples: usize },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
