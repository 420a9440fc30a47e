use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ideaspace::citation::{BatchConfig, HardNegativeThresholds, MiningThresholds, DEFAULT_ACCEPT_THRESHOLD};
use ideaspace::index::PoolingMode;
use ideaspace::kernel::LossConfig;
use ideaspace::novelty::NoveltyConfig;
use ideaspace::provider::ProviderConfig;

/// Everything a run can be configured with. Loaded from `--config`, then
/// overridden by flags; the result is echoed into every artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    pub mining: MiningSection,
    pub batches: BatchSection,
    pub loss: LossSection,
    pub retrieval: RetrievalSection,
    pub novelty: NoveltyConfig,
    pub provider: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningSection {
    pub window_years: u32,
    pub coupling_min: usize,
    pub cocite_min: usize,
    pub accept_threshold: f64,
    pub high_threshold: f64,
    pub low_threshold: f64,
}

impl Default for MiningSection {
    fn default() -> Self {
        let th = MiningThresholds::default();
        let hard = HardNegativeThresholds::default();
        MiningSection {
            window_years: th.window_years,
            coupling_min: th.coupling_min,
            cocite_min: th.cocite_min,
            accept_threshold: DEFAULT_ACCEPT_THRESHOLD,
            high_threshold: hard.high,
            low_threshold: hard.low,
        }
    }
}

impl MiningSection {
    pub fn thresholds(&self) -> MiningThresholds {
        MiningThresholds { window_years: self.window_years, coupling_min: self.coupling_min, cocite_min: self.cocite_min }
    }

    pub fn hard(&self) -> HardNegativeThresholds {
        HardNegativeThresholds { high: self.high_threshold, low: self.low_threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSection {
    pub batch_size: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        let b = BatchConfig::default();
        BatchSection { batch_size: b.batch_size, n_pos: b.n_pos, n_neg: b.n_neg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub tau: f64,
    pub gamma: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        LossSection { tau: l.tau, gamma: l.gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub ks: Vec<usize>,
    pub pooling: PoolingMode,
    pub pooled_k_multiplier: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection { ks: vec![10, 20, 30], pooling: PoolingMode::RoundRobin, pooled_k_multiplier: 3 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn batch_config(&self) -> BatchConfig {
        BatchConfig { batch_size: self.batches.batch_size, n_pos: self.batches.n_pos, n_neg: self.batches.n_neg, hard: self.mining.hard() }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { tau: self.loss.tau, gamma: self.loss.gamma }
    }

    pub fn validate(&self) -> Result<()> {
        self.mining.thresholds().validate()?;
        let m = &self.mining;
        for (name, v) in [("accept_threshold", m.accept_threshold), ("high_threshold", m.high_threshold), ("low_threshold", m.low_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                bail!("mining.{name} = {v} must lie in [0, 1]");
            }
        }
        if self.batches.batch_size == 0 || self.batches.n_pos == 0 {
            bail!("batches.batch_size and batches.n_pos must be at least 1");
        }
        self.loss_config().validate()?;
        if self.retrieval.ks.is_empty() || self.retrieval.ks.contains(&0) {
            bail!("retrieval.ks must be a non-empty list of positive integers");
        }
        if self.retrieval.pooled_k_multiplier == 0 {
            bail!("retrieval.pooled_k_multiplier must be at least 1");
        }
        if self.novelty.k == 0 {
            bail!("novelty.k must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        Ok(())
    }
}
