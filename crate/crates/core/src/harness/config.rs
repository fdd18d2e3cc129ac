use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::GrammarConfig;
use crate::plant::PlantConfig;
use crate::power::PowerConfig;
use crate::scheduler::{SchedulerConfig, LEAF_COUNT};
use crate::sync::SyncConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything the engine needs, loadable from a TOML file. Missing keys
/// and sections fall back to the shipped defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub tick_hz: u32,
    pub leaf_count: usize,
    pub seed: u64,
    pub grammar: GrammarConfig,
    pub sync: SyncConfig,
    pub scheduler: SchedulerConfig,
    pub power: PowerConfig,
    pub plant: PlantConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tick_hz: 50,
            leaf_count: LEAF_COUNT,
            seed: 0,
            grammar: GrammarConfig::default(),
            sync: SyncConfig::default(),
            scheduler: SchedulerConfig::default(),
            power: PowerConfig::default(),
            plant: PlantConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn dt_s(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.tick_hz < 20 {
            return Err(ConfigError::Invalid(format!(
                "tick_hz must be >= 20, got {}",
                self.tick_hz
            )));
        }
        if self.leaf_count != LEAF_COUNT {
            return Err(ConfigError::Invalid(format!(
                "leaf_count is fixed at {LEAF_COUNT}, got {}",
                self.leaf_count
            )));
        }
        self.grammar.validate().map_err(|e| invalid(&e))?;
        self.sync.validate().map_err(|e| invalid(&e))?;
        self.scheduler.validate().map_err(|e| invalid(&e))?;
        self.power.validate().map_err(|e| invalid(&e))?;
        self.plant.validate(self.dt_s()).map_err(|e| invalid(&e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(EngineConfig::from_toml_str("").unwrap(), EngineConfig::default());
    }

    #[test]
    fn partial_override() {
        let cfg = EngineConfig::from_toml_str(
            "seed = 9\n[grammar]\ninterrupt_interval_s = 3.0\n[sync]\nin_dwell_s = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grammar.interrupt_interval_s, 3.0);
        assert_eq!(cfg.grammar.interrupt_period_s, 0.6);
        assert_eq!(cfg.sync.in_dwell_s, 1.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::from_toml_str("tick_hz = 10").is_err());
        assert!(EngineConfig::from_toml_str("leaf_count = 4").is_err());
        assert!(EngineConfig::from_toml_str("[power]\nfan_power_w = 3.0").is_err());
        assert!(EngineConfig::from_toml_str("[sync]\nin_threshold = 0.5").is_err());
        assert!(matches!(
            EngineConfig::from_toml_str("bogus = 1"),
            Err(ConfigError::Parse(_))
        ));
    }
}
