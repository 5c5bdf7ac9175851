//! Harness-level errors with stable machine-readable kinds.

use crate::eval::EvalPoint;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] scalemask_core::Error),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("target recall {target} not achievable; best point: threshold {} recall {:.4} ratio {:.4}", best.threshold, best.recall, best.ratio)]
    NotAchievable { target: f64, best: EvalPoint },
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Stable tag for the machine-readable error object.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Generation(_) => "generation",
            CliError::NotAchievable { .. } => "not_achievable",
            CliError::Config(_) => "config",
            CliError::Format(_) => "format",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
