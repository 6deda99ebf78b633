use thiserror::Error;

use crate::adapter::AdapterError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid knowledge state: {0}")]
    InvalidState(String),

    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),

    #[error("all sampled pairs coincide; Lipschitz ratio undefined")]
    DegenerateSamples,

    #[error("state became non-finite at iteration {iteration}")]
    NumericOverflow { iteration: usize },

    #[error("trajectory too short to estimate a contraction constant")]
    InsufficientTrajectory,

    #[error("all step distances are zero; trajectory started at a fixed point")]
    AllZeroSteps,

    #[error("contraction constant must lie in (0, 1), got {0}")]
    InvalidGamma(f64),

    #[error("unknown claim id `{0}`")]
    UnknownClaimId(String),

    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("no seeded contradictions; detection rate undefined")]
    NoSeededContradictions,

    #[error("cannot aggregate an empty batch")]
    EmptyBatch,

    #[error("invalid trial configuration: {0}")]
    ConfigInvalid(String),

    #[error("operator failure: {0}")]
    OperatorFailure(#[from] AdapterError),

    #[error("trial exceeded its wall-clock limit")]
    Timeout,

    #[error("line {line}: unsupported schema version {found} (expected {expected})")]
    SchemaVersionMismatch { line: usize, found: u32, expected: u32 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
