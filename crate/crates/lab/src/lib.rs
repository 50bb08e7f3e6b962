//! Instance families, experiment configuration, the run pipeline, SVG
//! plotting and the executable acceptance criteria.

pub mod accept;
pub mod config;
pub mod families;
pub mod pipeline;
pub mod plot;

use std::fmt::Display;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Pipeline { stage: &'static str, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Tags a lower-level error with the pipeline stage it came from.
pub fn stage<E: Display>(name: &'static str) -> impl Fn(E) -> LabError {
    move |e| LabError::Pipeline { stage: name, message: e.to_string() }
}
