use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate objective: non-finite value {0} at the initial point")]
    DegenerateObjective(f64),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no usable demonstrations ({skipped} skipped)")]
    NoUsableDemos { skipped: usize },
    #[error("Hessian is not positive definite even after jitter")]
    NotPositiveDefinite,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
