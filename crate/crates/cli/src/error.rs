use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("convergence failure: {0}")]
    Convergence(ensemble_mdp::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("tracking did not converge: {0}")]
    TrackNotConverged(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io { .. } => 1,
            CliError::Parse(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Invalid(_) => 4,
            CliError::TrackNotConverged(_) => 5,
        })
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<ensemble_mdp::Error> for CliError {
    fn from(e: ensemble_mdp::Error) -> Self {
        match e {
            ensemble_mdp::Error::Convergence { .. } => CliError::Convergence(e),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
