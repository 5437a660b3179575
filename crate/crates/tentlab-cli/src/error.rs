use tentlab::LabError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    /// A check ran to completion and found violations.
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 usage, 2 validation or invariant failure, 3 numerical non-convergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lab(LabError::NonConvergence { .. }) => 3,
            CliError::Lab(_) | CliError::Failed(_) | CliError::Io { .. } => 2,
        }
    }
}
