//! Exit-code policy and the machine-readable error line.

use std::fmt;

/// 0 success, 2 validation error, 3 numerical error.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub msg: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error code={} kind={} msg={:?}", self.code, self.kind, self.msg)
    }
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self { code: 2, kind: "validation", msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { code: 3, kind: "numerical", msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { code: 2, kind: "io", msg: msg.into() }
    }
}

impl From<glate::Error> for CliError {
    fn from(e: glate::Error) -> Self {
        use glate::Error::*;
        match e {
            RankDeficient(_) | SingularRestriction | WeakDenominator | ZeroFirstStage
            | ZeroDenominator | NonFinite(_) => CliError::numerical(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
