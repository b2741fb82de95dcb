use crate::config::ConfigError;
use crate::output::SnapshotError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] segrekin_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Snapshot(#[from] SnapshotError),
    #[error("{0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl AppError {
    /// Stable tag for the machine-readable error record.
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Core(_) => "solver",
            AppError::Io(_) => "io",
            AppError::Snapshot(_) => "snapshot",
            AppError::Usage(_) => "usage",
            AppError::Validation(_) => "validation",
        }
    }
}
