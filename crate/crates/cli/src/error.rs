use std::fmt::Display;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Every failure maps to one of three exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or malformed settings, or a referenced path that does not exist.
    #[error("config: {0}")]
    Config(String),
    /// An input file that does not match its declared format.
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn input(path: &Path, message: impl Display) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl Display) -> Self {
        CliError::Runtime(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input { .. } => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input { .. } => "input_format",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error serializes")
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
