use std::path::PathBuf;

use thiserror::Error;

/// A config problem, located by the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] ipsukf::Error),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("a sweep needs at least two seeds, got {0}")]
    TooFewSeeds(usize),
}

/// Process exit codes.
pub mod exit {
    pub const CONVERGED: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const NOT_CONVERGED: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const CONFIG: i32 = 64;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::UnknownPreset(_) | Self::TooFewSeeds(_) => exit::CONFIG,
            Self::Core(ipsukf::Error::Config(_)) => exit::CONFIG,
            _ => exit::FAILURE,
        }
    }
}
