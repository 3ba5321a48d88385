use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum WlfError {
    /// Invalid user-facing configuration (specs, schedules, datasets).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an API contract (shape mismatch, out-of-range time, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite inputs or numeric blow-up during computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A derivative order or mode the chosen configuration cannot provide.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WlfError>;

impl WlfError {
    pub fn config(msg: impl Into<String>) -> Self {
        WlfError::Config(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        WlfError::Contract(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        WlfError::Numeric(msg.into())
    }
    pub fn capability(msg: impl Into<String>) -> Self {
        WlfError::Capability(msg.into())
    }
}
