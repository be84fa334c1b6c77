use thiserror::Error;

pub type Result<T> = std::result::Result<T, RdsError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("index {index} out of range (max {max})")]
    Index { index: usize, max: usize },

    #[error("channel {channel} has kind {found}, expected {expected}")]
    Kind {
        channel: usize,
        expected: &'static str,
        found: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("non-finite state at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("tangent frame degenerated at step {step}")]
    Degeneracy { step: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mesh of {points} points exceeds budget of {budget}")]
    Budget { points: usize, budget: usize },

    #[error("series of length {len} too short for batch length {batch_len}")]
    Length { len: usize, batch_len: usize },

    #[error("grid alignment error: {0}")]
    Alignment(String),
}

impl RdsError {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, RdsError::BlowUp { .. })
    }
}
