//! Run configuration: one TOML document covering synthesis, the scenario,
//! the gNB model and both detectors. Every field has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectorConfig;
use crate::storm::GnbParams;
use crate::synth::{DiurnalProfile, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: u32,
    pub profile: DiurnalProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 4,
            profile: DiurnalProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// 1-based day of the trace the static thresholds are fitted on.
    pub reference_day: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { reference_day: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub scenario: ScenarioConfig,
    pub gnb: GnbParams,
    pub detector: DetectorConfig,
    pub baseline: BaselineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.synth.days == 0 {
            return Err(ConfigError::Invalid("synth.days must be at least 1".into()));
        }
        self.synth.profile.validate().map_err(|e| inv(&e))?;
        self.scenario.validate().map_err(|e| inv(&e))?;
        self.gnb.validate().map_err(|e| inv(&e))?;
        self.detector.validate().map_err(|e| inv(&e))?;
        if self.baseline.reference_day == 0 || self.baseline.reference_day > self.synth.days {
            return Err(ConfigError::Invalid(format!(
                "baseline.reference_day must lie in 1..={}",
                self.synth.days
            )));
        }
        Ok(())
    }
}
