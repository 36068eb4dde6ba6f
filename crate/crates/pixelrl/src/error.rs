//! Error type shared by the whole crate.

use thiserror::Error;

/// Errors raised by grids, actions, environments, the network, training and
/// the checkpoint container.
#[derive(Debug, Error)]
pub enum PixelRlError {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("environment error: {0}")]
    Env(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PixelRlError>;
