use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },

    #[error("missing {artifact}: run `semgraph {stage} --config {config}` first")]
    MissingPrerequisite {
        artifact: PathBuf,
        stage: &'static str,
        config: PathBuf,
    },

    #[error("stage {stage} is out of date: run `semgraph {stage} --config {config}` again")]
    StaleStage { stage: &'static str, config: PathBuf },

    #[error("LLM endpoint rejected the credentials (HTTP {status}); check the API key")]
    Auth { status: u16 },

    #[error(transparent)]
    Core(#[from] semgraph::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_user_error() => 2,
            CliError::Internal(_) => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub fn io_err(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Core(semgraph::Error::io(path, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Auth { status: 401 }.exit_code(), 1);
        assert_eq!(CliError::Internal("x".into()).exit_code(), 2);
        let nonfinite = semgraph::Error::NonFinite {
            mode: "dbow".into(),
            epoch: 1,
            lr: 0.1,
        };
        assert_eq!(CliError::from(nonfinite).exit_code(), 2);
        let parse = semgraph::Error::Parse {
            path: "c.jsonl".into(),
            line: 3,
            reason: "bad".into(),
        };
        assert_eq!(CliError::from(parse).exit_code(), 1);
    }
}
