use std::io;
use std::path::{Path, PathBuf};

use egpt_core::Error as CoreError;

/// Exit statuses follow the BSD `sysexits` convention.
pub mod exit {
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const NUMERIC: u8 = 70;
    pub const IO: u8 = 74;
    pub const CONFIG: u8 = 78;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, reason: impl ToString) -> Self {
        CliError::Format { path: path.as_ref().to_path_buf(), reason: reason.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Format { .. } => exit::DATA,
            CliError::Core(e) => match e {
                CoreError::Parameter { .. } | CoreError::Config(_) => exit::CONFIG,
                CoreError::NonFinite { .. } | CoreError::Divergence { .. } | CoreError::Dimension { .. } => exit::NUMERIC,
                _ => exit::DATA,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
