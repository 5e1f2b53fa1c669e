use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("cannot read {}: {reason}", .path.display())]
    MissingFile { path: PathBuf, reason: String },

    #[error("{} was built under config {found}, this run is {expected}; rerun the stage or pass --allow-config-mismatch", .path.display())]
    ConfigMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] lamp_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingFile { .. } => "missing_file",
            CliError::ConfigMismatch { .. } => "config_mismatch",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    /// 2 for problems with the invocation itself, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
