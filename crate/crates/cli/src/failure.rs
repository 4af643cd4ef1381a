use std::fmt;

use coexist_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_COMPLIANCE: u8 = 4;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            msg: msg.into(),
        }
    }

    pub fn compliance(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPLIANCE,
            msg: msg.into(),
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            msg: msg.into(),
        }
    }

    /// Reclassifies any error as a configuration problem (e.g. an unreadable scenario).
    pub fn into_config(self) -> Self {
        Self {
            code: EXIT_CONFIG,
            ..self
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Format { .. } | Error::Shape { .. } => EXIT_IO,
            Error::Config(_)
            | Error::Validation { .. }
            | Error::Parse { .. }
            | Error::Usage(_)
            | Error::Calibration(_)
            | Error::DegenerateGeometry(_) => EXIT_CONFIG,
            Error::Numeric { .. } | Error::Sequencing(_) | Error::Accounting(_) => EXIT_RUNTIME,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}
