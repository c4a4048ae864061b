use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("generation {requested} loses floating-point resolution; maximum safe generation is {max_safe}")]
    Precision { requested: usize, max_safe: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("only {usable} usable scales (at least 3 required)")]
    InsufficientScales { usable: usize },

    #[error("empty shell: acceptance rate {rate:e} after {attempts} attempts")]
    EmptyShell { rate: f64, attempts: u64 },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("window violated: {0}")]
    Window(String),

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("radius {requested} is not resolvable; minimum usable radius is {min_usable}")]
    Unresolvable { requested: f64, min_usable: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
