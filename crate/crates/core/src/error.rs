use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("too large for brute force: {pairs} strategy pairs exceeds limit {limit}")]
    TooLarge { pairs: f64, limit: f64 },

    #[error("unknown inequality `{0}`")]
    UnknownInequality(String),

    #[error("invalid state or measurement: {0}")]
    InvalidOperator(String),

    #[error("word degree {degree} exceeds cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("relaxation infeasible at g = {g}: {detail}")]
    Infeasible { g: f64, detail: String },

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e}, primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    NotConverged { iterations: usize, gap: f64, primal_residual: f64, dual_residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed inequality file: {0}")]
    Format(#[from] serde_json::Error),
}
