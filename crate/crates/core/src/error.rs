use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// CG hit a non-finite or non-positive curvature term. Carries the last
    /// finite iterate so callers can fall back gracefully.
    #[error("conjugate gradient breakdown after {iters} iterations")]
    SolverBreakdown { last_iterate: Vec<f64>, iters: usize },

    #[error("non-finite value encountered in {0}")]
    PoisonedParameters(&'static str),

    #[error("full curvature needs d <= {cap} but d = {d}; use the diagonal or kfac approximation")]
    CurvatureTooLarge { d: usize, cap: usize },

    #[error("curvature estimates must share variant and dimension")]
    MixedCurvature,

    #[error("unsupported curvature request: {0}")]
    UnsupportedCurvature(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("not enough rows: {0}")]
    NotEnoughRows(String),

    #[error("step failed: update stayed non-finite after {0} step-size halvings")]
    StepFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
