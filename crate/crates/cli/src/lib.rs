//! Command-line harness: graph generation, training sweeps, the privacy
//! accountant, the attribute inference attack, and result aggregation.

pub mod accountant;
pub mod attack;
pub mod config;
pub mod gen;
pub mod report;
pub mod train;

use std::path::Path;

use thiserror::Error;

pub use config::{ExperimentConfig, GraphSource};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input files.
    #[error("{0}")]
    Validation(String),
    /// Failure while running a valid request.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Single-line JSON form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "status": "error", "kind": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub(crate) fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Parse `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

/// Parse a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(str::trim).map(|x| x.parse::<T>().map_err(|e| format!("'{x}': {e}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_json_is_one_line() {
        let e = CliError::Validation("line 3: key 'x': bad\nvalue".into());
        let j = e.to_json();
        assert!(!j.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["status"], "error");
        assert_eq!(v["kind"], "validation");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn assignment_and_list() {
        assert_eq!(parse_assignment("a = 1").unwrap(), ("a".into(), "1".into()));
        assert!(parse_assignment("a").is_err());
        assert_eq!(parse_list::<usize>("3, 10").unwrap(), vec![3, 10]);
    }
}
