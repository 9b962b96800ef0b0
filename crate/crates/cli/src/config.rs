//! Run configuration: a flat TOML key namespace, with CLI flags taking
//! precedence over file keys. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bornseq_core::{LengthPolicy, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    Trainable,
    OneHot,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub target_n: usize,
    #[serde(default = "defaults::length_policy")]
    pub length_policy: LengthPolicy,
    #[serde(default = "defaults::test_fraction")]
    pub test_fraction: f64,
    pub d_max: usize,
    /// Physical dimension; forced to the vocabulary size in one-hot mode.
    pub p: usize,
    #[serde(default = "defaults::embedding")]
    pub embedding: EmbeddingMode,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,

    #[serde(default = "defaults::lr_mps")]
    pub lr_mps: f64,
    #[serde(default = "defaults::lr_emb")]
    pub lr_emb: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "defaults::adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub freeze_embedding: bool,
    #[serde(default = "defaults::log_clamp")]
    pub log_clamp: f64,
}

mod defaults {
    use std::path::PathBuf;

    use bornseq_core::{LengthPolicy, TrainConfig};

    use super::EmbeddingMode;

    pub fn length_policy() -> LengthPolicy {
        LengthPolicy::Pad
    }
    pub fn test_fraction() -> f64 {
        0.2
    }
    pub fn embedding() -> EmbeddingMode {
        EmbeddingMode::Trainable
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from(".")
    }
    pub fn lr_mps() -> f64 {
        TrainConfig::default().lr_mps
    }
    pub fn lr_emb() -> f64 {
        TrainConfig::default().lr_emb
    }
    pub fn batch_size() -> usize {
        TrainConfig::default().batch_size
    }
    pub fn epochs() -> usize {
        TrainConfig::default().epochs
    }
    pub fn adam_beta1() -> f64 {
        TrainConfig::default().adam_beta1
    }
    pub fn adam_beta2() -> f64 {
        TrainConfig::default().adam_beta2
    }
    pub fn adam_eps() -> f64 {
        TrainConfig::default().adam_eps
    }
    pub fn log_clamp() -> f64 {
        TrainConfig::default().log_clamp
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_n == 0 {
            bail!("target_n must be >= 1");
        }
        if self.d_max == 0 || self.p == 0 {
            bail!("d_max and p must be >= 1");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must be in (0, 1)");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr_mps: self.lr_mps,
            lr_emb: self.lr_emb,
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            seed: self.seed,
            freeze_embedding: self.freeze_embedding || self.embedding == EmbeddingMode::OneHot,
            log_clamp: self.log_clamp,
        }
    }

    /// Serialized manifest; feeding it back as --config reproduces the run.
    pub fn to_manifest(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
