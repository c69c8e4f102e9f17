use std::fmt;

use superfid::io::FormatError;
use superfid::Error;

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    pub const DOMAIN: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const TARGET_MISS: u8 = 3;
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: code::INPUT,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: code::DOMAIN,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Self::input(e.to_string()),
            _ => Self::domain(e.to_string()),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Model(inner) => inner.into(),
            other => Self::input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::input(format!("CSV: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::input(format!("malformed JSON: {e}"))
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
