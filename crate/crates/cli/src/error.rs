use rds_lab_core::RdsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("unknown scenario `{name}`; valid scenarios: {}", valid.join(", "))]
    UnknownScenario { name: String, valid: Vec<&'static str> },

    #[error(transparent)]
    Core(#[from] RdsError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 for anything the user can fix in the
    /// configuration, 3 for numerical blow-up, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid(_) | CliError::UnknownScenario { .. } => 2,
            CliError::Core(e) => match e {
                RdsError::Parameter(_)
                | RdsError::Config(_)
                | RdsError::Grid(_)
                | RdsError::Precondition(_)
                | RdsError::Budget { .. } => 2,
                RdsError::BlowUp { .. } => 3,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}
