use crate::hmf::HmfError;

/// Exit status for invalid input: configs, field files, preconditions.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit status when a numerical method fails or output cannot be written.
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Field(#[from] HmfError),
    #[error(transparent)]
    Core(#[from] hma_core::Error),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Field(_) => EXIT_VALIDATION,
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) | CliError::Output { .. } => EXIT_SOLVER,
        }
    }

    pub fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
