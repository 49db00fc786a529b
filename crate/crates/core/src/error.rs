use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("threshold {0} is not strictly inside (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error("initial element {0} is not in [0, 1)")]
    InitialOutOfRange(f64),
    #[error("checkpoint {checkpoint} exceeds the run length {steps}")]
    CheckpointBeyondSteps { checkpoint: u64, steps: u64 },
    #[error("checkpoints must be strictly increasing (found {prev} then {next})")]
    CheckpointsUnsorted { prev: u64, next: u64 },
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error("invalid plan: {0}")]
    Plan(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("{what}: argument {value} outside the domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample set is empty")]
    Empty,
    #[error("variance needs at least two samples")]
    SingleSample,
    #[error("checkpoint {0} is not present in the pool")]
    MissingCheckpoint(u64),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{failed} of {total} replicates failed (first failing index {first}); {completed} completed")]
    ReplicateFailure {
        failed: usize,
        total: usize,
        first: u64,
        completed: usize,
    },
    #[error("non-finite value in output field `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
