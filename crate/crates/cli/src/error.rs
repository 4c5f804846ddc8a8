use std::path::Path;

use agewatch::candidacy::CandidacyError;
use agewatch::detector::DetectorError;
use agewatch::heap::HeapError;
use agewatch::indicators::IndicatorError;
use agewatch::sim::SimError;
use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input, unwritable output.
    #[error("{0}")]
    Input(String),
    /// A model invariant broke; this is a bug, not bad input.
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<HeapError> for CliError {
    fn from(e: HeapError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CandidacyError> for CliError {
    fn from(e: CandidacyError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invariant(_) => CliError::Invariant(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Indicator errors with the file they came from.
pub fn indicator_error(path: &Path, e: IndicatorError) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
