use std::path::Path;

use agewatch::candidacy::CandidacyConfig;
use agewatch::detector::DetectorConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Contents of an agewatch config file; see `config/agewatch.toml`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub candidacy: CandidacyConfig,
    pub detector: DetectorConfig,
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn validate(&self, origin: &str) -> Result<(), CliError> {
        self.candidacy
            .validate()
            .map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
        self.detector
            .validate()
            .map_err(|e| CliError::Input(format!("{origin}: {e}")))
    }

    /// Reads `path`, or returns the built-in defaults when there is none.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml_str(&text, &p.display().to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_in_file_matches_defaults() {
        let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/agewatch.toml"));
        assert_eq!(Config::load(Some(path)).unwrap(), Config::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_str("[detector]\nwindoww = 3\n", "x").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let err = Config::from_toml_str("[detector]\nwindow = 2\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().starts_with("cfg.toml: "), "{err}");
    }
}
