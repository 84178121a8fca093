//! Error type shared across the crate.
//!
//! The CLI maps variants to exit codes: config errors → 2, budget errors → 3,
//! numerical/geometry failures → 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input schema.
    #[error("config error: {0}")]
    Config(String),

    /// An enumeration or sweep exceeds the allowed budget.
    #[error("budget exceeded for {what}: size {size} > limit {limit}{hint}")]
    Budget {
        what: String,
        size: u128,
        limit: u128,
        hint: String,
    },

    /// Solver or floating-point failure.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Geometry precondition violated (non-SPD input, cut-off boundary, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub fn budget(what: impl Into<String>, size: u128, limit: u128, hint: impl Into<String>) -> Self {
        Error::Budget {
            what: what.into(),
            size,
            limit,
            hint: hint.into(),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Budget { .. } => 3,
            Error::Numerical(_) | Error::Geometry(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
