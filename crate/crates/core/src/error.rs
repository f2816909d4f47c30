use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for a space of {n_modes} mode(s)")]
    InvalidMode { mode: usize, n_modes: usize },

    #[error("mode structure mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid capacity {0}: every mode needs at least one level")]
    InvalidCapacity(usize),

    #[error("amplitude array has length {got}, expected {expected}")]
    AmplitudeLength { expected: usize, got: usize },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("non-finite amplitude after step at t = {t}; the time step is probably too large")]
    NonFinite { t: f64 },

    #[error("expected {expected} noise increment(s), got {got}")]
    NoiseCount { expected: usize, got: usize },

    #[error("capacity of mode {mode} would need to exceed the maximum of {max}")]
    CapacityExhausted { mode: usize, max: usize },

    #[error("target capacity too small: {dropped:e} probability would be lost")]
    InsufficientCapacity { dropped: f64 },

    #[error("Hilbert-space dimension {dim} exceeds the oracle limit {limit}")]
    OracleTooLarge { dim: usize, limit: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("mean variance is zero; localization is unbounded")]
    ZeroVariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed record: {0}")]
    Record(String),
}
