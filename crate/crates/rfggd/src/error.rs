use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(#[from] rfggd_core::Error),
    /// The run finished but ended in a stall or an infeasible state. Outputs
    /// have been written.
    #[error("terminal state: {0}")]
    Terminal(String),
}

impl RunError {
    pub fn config(field: &str, msg: impl std::fmt::Display) -> Self {
        Self::Config(format!("{field}: {msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Terminal(_) => 4,
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
