//! Experiment configuration, read from TOML. Every key has a default, so an
//! empty file describes the desk-scale experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::fedsim::{BaselineConfig, DatasetConfig, Method, TrainConfig};
use crate::pdd::PddConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Realization `r` draws its channels and channel noise from `master_seed + r`.
    pub master_seed: u64,
    pub users: usize,
    pub realizations: usize,
    pub methods: Vec<Method>,
    /// Output directory used when the command line gives none.
    pub output_dir: Option<String>,
    pub channel: ChannelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub pdd: PddConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 0,
            users: 20,
            realizations: 16,
            methods: Method::ALL.to_vec(),
            output_dir: None,
            channel: ChannelConfig::default(),
            train: TrainConfig::default(),
            dataset: DatasetConfig::default(),
            pdd: PddConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

/// Offset separating the dataset stream from the per-realization seeds.
pub const DATASET_SEED_OFFSET: u64 = 0x5EED_0000_0000;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::Config("users must be at least 1".into()));
        }
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must name at least one method".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods must not repeat".into()));
        }
        if self.master_seed.checked_add(self.realizations as u64).is_none() {
            return Err(Error::Config("master_seed + realizations overflows".into()));
        }
        self.channel.validate()?;
        self.train.validate()?;
        self.dataset.validate()?;
        self.pdd.validate()?;
        self.baselines.validate()
    }

    pub fn channel_seed(&self, realization: usize) -> u64 {
        self.master_seed + realization as u64
    }

    pub fn dataset_seed(&self) -> u64 {
        self.master_seed.wrapping_add(DATASET_SEED_OFFSET)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!((cfg.users, cfg.realizations, cfg.train.rounds), (20, 16, 25));
        assert_eq!(cfg.channel.n_antennas, 4);
        assert!((cfg.train.p_a() - 1.0).abs() < 1e-15 && (cfg.train.sigma_n2() - 0.01).abs() < 1e-15);
        assert_eq!(cfg.train.lr, 0.05);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![Method::Aps, Method::PddFa];
        cfg.train.sigma_n2_mw = Some(0.0);
        cfg.output_dir = Some("out".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["realizations = 0", "methods = []", "users = 0", "[train]\nrounds = 0", "unknown = 1", "methods = [\"dc\"]", "methods = [\"mrt\", \"mrt\"]"] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
