use thiserror::Error;

/// Errors produced by the planning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid kernel bandwidth: {0}")]
    InvalidBandwidth(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("negative collision residual {value} at index {index}")]
    NegativeResidual { index: usize, value: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("Frenet singularity: 1 - d*kappa = {value:e}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Singularity { step: Option<usize>, value: f64 },

    #[error("zero speed at step {0}: steering is undefined")]
    ZeroSpeed(usize),

    #[error("singular linear system: {0}")]
    SingularSystem(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no feasible sample: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
