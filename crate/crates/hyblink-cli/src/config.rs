//! Global TOML configuration.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. Command-line flags override file values. The path comes
//! from `--config` or the `HYBLINK_CONFIG` environment variable; with
//! neither, built-in defaults apply.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hyblink::energy::EnergyParams;
use hyblink::neural::TrainConfig;
use hyblink::phychannel::ChannelParams;
use hyblink::synthgen::FeatureStatsTable;
use hyblink::Thresholds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateDefaults {
    pub n_sessions: usize,
    /// Concept width in bits, 8 or 16.
    pub width: u8,
    pub key_seed: u64,
}

impl Default for SimulateDefaults {
    fn default() -> Self {
        SimulateDefaults { n_sessions: 10_000, width: 16, key_seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub features: FeatureStatsTable,
    pub train: TrainConfig,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    pub simulate: SimulateDefaults,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            master_seed: 42,
            thresholds: Thresholds::default(),
            features: FeatureStatsTable::default(),
            train: TrainConfig::default(),
            channel: ChannelParams::default(),
            energy: EnergyParams::default(),
            simulate: SimulateDefaults::default(),
            paths: Paths::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Config::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate().context("thresholds")?;
        self.features.validate().context("features")?;
        self.train.validate().context("train")?;
        self.channel.validate().context("channel")?;
        self.energy.validate().context("energy")?;
        hyblink::ConceptWidth::try_from(self.simulate.width).context("simulate.width")?;
        if self.simulate.n_sessions < 1 {
            anyhow::bail!("simulate.n_sessions must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(Config::default().validate().is_ok());
    }

    #[test]
    fn partial_sections_fill_from_defaults() {
        let toml = r#"
            master_seed = 7
            [thresholds]
            snr_db = 21.0
            [channel]
            jam_power_ratio = 2.0
        "#;
        let cfg: Config = toml::from_str(toml).unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.thresholds.snr_db, 21.0);
        assert_eq!(cfg.thresholds.temp_c, 37.0);
        assert_eq!(cfg.channel.jam_power_ratio, 2.0);
        assert!(cfg.channel.jam_radio);
    }

    #[test]
    fn unknown_keys_rejected() {
        let toml = "master_seed = 1\nunknown_key = true\n";
        assert!(toml::from_str::<Config>(toml).is_err());
        let toml = "[thresholds]\nsnr_db = 20.0\nbogus = 1\n";
        assert!(toml::from_str::<Config>(toml).is_err());
    }

    #[test]
    fn invalid_values_rejected_on_validate() {
        let toml = "[thresholds]\nhr_low_bpm = 200.0\n";
        let cfg: Config = toml::from_str(toml).unwrap();
        assert!(cfg.validate().is_err());
        let toml = "[simulate]\nwidth = 12\n";
        let cfg: Config = toml::from_str(toml).unwrap();
        assert!(cfg.validate().is_err());
    }
}
