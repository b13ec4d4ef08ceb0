use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid usage: {0}")]
    Usage(String),
    #[error("scenario generation failed: {0}")]
    Generation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Range(_) => "range",
            Error::Shape(_) => "shape",
            Error::Usage(_) => "usage",
            Error::Generation(_) => "generation",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Model(_) => "model",
            Error::Planning(_) => "planning",
            Error::Diverged(_) => "diverged",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
