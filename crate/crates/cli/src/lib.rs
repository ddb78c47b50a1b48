//! The `og` command-line tool and its local grounding service.

pub mod bundle;
pub mod commands;
pub mod output;
pub mod server;

use std::fmt;

use og_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;

/// A command that did not succeed: exit code plus a diagnostic for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn empty(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_EMPTY,
            message: message.into(),
        }
    }

    /// Prefixes the message with what was being done, e.g. a file name.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::OutOfRange(_) => EXIT_USAGE,
            Error::PlacementFailure { .. } => EXIT_EMPTY,
            Error::Io(_)
            | Error::Format { .. }
            | Error::Size(_)
            | Error::DimensionMismatch(_)
            | Error::Json(_) => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;
