use thiserror::Error;

/// Errors raised across the factorization and imputation pipeline.
#[derive(Error, Debug)]
pub enum GlmfError {
    #[error("value {value} is outside the mean domain of the {family} family")]
    MeanDomain { family: &'static str, value: f64 },
    #[error("observation {value} is outside the support of the {family} family")]
    Support { family: &'static str, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite IRLS weight in column {column}")]
    NonFiniteWeights { column: usize },
    #[error("rank {rank} exceeds the {available} available singular values")]
    RankTooLarge { rank: usize, available: usize },
    #[error("no observed cells")]
    NoObservedCells,
    #[error("empty cell set")]
    EmptyCells,
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GlmfError>;
