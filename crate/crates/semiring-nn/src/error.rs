use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty reduction")]
    EmptyReduction,

    #[error("invalid semiring: {0}")]
    InvalidSemiring(String),

    #[error("invalid model config: {0}")]
    ModelConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("schedule step {step} out of range 0..={total_steps}")]
    ScheduleRange { step: usize, total_steps: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
