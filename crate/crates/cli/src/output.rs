use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::error::CliError;

/// An output directory, created on first use.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<Output, CliError> {
        Output::create(&self.dir.join(name))
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
        text.push('\n');
        self.write(name, text)
    }
}

/// Source of the `generated_at` stamp; `--fixed-clock` pins it for tests.
#[derive(Debug, Clone, Copy)]
pub struct Clock(pub Option<DateTime<Utc>>);

impl Clock {
    pub fn stamp(&self) -> String {
        self.0
            .unwrap_or_else(Utc::now)
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

pub fn parse_clock(text: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("expected an RFC 3339 time such as 2024-01-01T00:00:00Z: {e}"))
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub generated_at: String,
    pub inputs: serde_json::Value,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, clock: Clock, inputs: serde_json::Value) -> Self {
        Manifest {
            tool: "agewatch",
            version: env!("CARGO_PKG_VERSION"),
            command,
            generated_at: clock.stamp(),
            inputs,
        }
    }
}
