//! One TOML file governs every knob of a run.

use crate::training::{ConsistentConfig, MaskedConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub isnr_grid_db: Vec<f64>,
    pub samples_per_type_per_isnr: usize,
    /// Fixed SNR of the communication signal against the AWGN floor.
    pub comm_snr_db: f64,
}

impl Default for DatasetConfig {
    /// Desk-scale recipe: 8 types x 4 ISNRs x 100 samples.
    fn default() -> Self {
        Self {
            seed: 7,
            isnr_grid_db: vec![-14.0, -8.0, 0.0, 8.0],
            samples_per_type_per_isnr: 100,
            comm_snr_db: 10.0,
        }
    }
}

impl DatasetConfig {
    /// Full-scale recipe: 8 types x 12 ISNRs (-14..8 dB in 2 dB steps) x 400.
    pub fn full_scale() -> Self {
        Self {
            isnr_grid_db: (0..12).map(|i| -14.0 + 2.0 * i as f64).collect(),
            samples_per_type_per_isnr: 400,
            ..Self::default()
        }
    }

    pub fn total_samples(&self) -> usize {
        crate::siggen::JammingType::ALL.len()
            * self.isnr_grid_db.len()
            * self.samples_per_type_per_isnr
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// FGSM budgets in 1/255 pixel units.
    pub eps_255: Vec<f64>,
    /// Seed for the attacker's ensemble draw against masked models.
    pub attack_seed: u64,
    /// Seed for the defender's fresh masks at evaluation time.
    pub defense_seed: u64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            eps_255: vec![3.0, 6.0, 8.0, 14.0],
            attack_seed: 1001,
            defense_seed: 2002,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub mask: MaskedConfig,
    pub consistency: ConsistentConfig,
    pub attack: AttackSection,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&raw)
    }
}
