//! Pipeline configuration, read from a single JSON file. Every field has a
//! default, so `{}` is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activity::ActivityParams;
use crate::geo::{ColocationParams, MovementParams};
use crate::hrv::{HrvConfig, WindowMode};
use crate::ingest::DEFAULT_GAP_TOLERANCE_MS;
use crate::timesync::DEFAULT_SKEW_BOUND_MS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub gap_tolerance_ms: i64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig { gap_tolerance_ms: DEFAULT_GAP_TOLERANCE_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    /// Bound applied to devices whose clock entry does not set one.
    pub skew_bound_ms: i64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { skew_bound_ms: DEFAULT_SKEW_BOUND_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrvSection {
    #[serde(flatten)]
    pub params: HrvConfig,
    pub windows: WindowMode,
}

impl Default for HrvSection {
    fn default() -> Self {
        HrvSection { params: HrvConfig::default(), windows: WindowMode::Tumbling }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoSection {
    pub colocation: ColocationParams,
    pub movement: MovementParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BusSection {
    pub high_water: usize,
}

impl Default for BusSection {
    fn default() -> Self {
        BusSection { high_water: crate::bus::BusConfig::default().high_water }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub reconstruction: ReconstructionConfig,
    pub clock: ClockConfig,
    pub hrv: HrvSection,
    pub geo: GeoSection,
    pub activity: ActivityParams,
    pub bus: BusSection,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(json)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), ConfigError> {
        let a = &self.activity;
        if a.e_rest_bpm > a.e_act_bpm {
            return Err(ConfigError::Invalid(format!(
                "activity.e_rest_bpm {} exceeds e_act_bpm {}",
                a.e_rest_bpm, a.e_act_bpm
            )));
        }
        if self.reconstruction.gap_tolerance_ms < 0 {
            return Err(ConfigError::Invalid("reconstruction.gap_tolerance_ms is negative".into()));
        }
        if self.clock.skew_bound_ms <= 0 {
            return Err(ConfigError::Invalid("clock.skew_bound_ms must be positive".into()));
        }
        if self.hrv.params.window_s == 0 || a.slice_s == 0 {
            return Err(ConfigError::Invalid("window lengths must be positive".into()));
        }
        Ok(())
    }
}
