//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration violates one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An argument is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// The training loop produced a non-finite loss or gradient.
    #[error("training error: {0}")]
    Training(String),
    /// A checkpoint or dataset file is unreadable or incompatible.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
