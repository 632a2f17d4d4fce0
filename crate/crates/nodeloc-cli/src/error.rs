use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("{context}: {msg}")]
    Data { context: String, msg: String },
}

impl CliError {
    pub fn data(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        CliError::Data {
            context: context.into(),
            msg: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. } | CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
        }
    }
}
