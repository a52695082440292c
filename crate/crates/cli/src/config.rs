//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use natbug_core::evaluator::{DEFAULT_BUDGET, DEFAULT_MAX_BUG_LINES, DEFAULT_RUNS};
use natbug_core::miner::DEFAULT_MAX_DELETE;
use natbug_core::{CacheConfig, CreditMode, ScoringConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "NATBUG_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Line entropy.
    #[default]
    Raw,
    /// Entropy z-scored within its line type.
    Type,
    /// Type z-score times the type's bug weight.
    Wtype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    /// The `score` column written by `score`.
    #[default]
    Score,
    Entropy,
    Z,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Language profile TOML; the built-in Java profile when unset.
    pub profile: Option<PathBuf>,
    pub global_order: usize,
    pub cache: CacheConfig,
    pub bidirectional: bool,
    pub bin_count: usize,
    pub mode: ScoreMode,
    pub max_delete: usize,
    pub max_bug_lines: usize,
    pub credit: CreditMode,
    pub budget: f64,
    pub rank_by: RankBy,
    pub seed: Option<u64>,
    pub runs: usize,
    pub bootstrap: usize,
    pub sweep_orders: Vec<usize>,
    pub sweep_weights: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scoring = ScoringConfig::default();
        RunConfig {
            profile: None,
            global_order: scoring.global_order,
            cache: CacheConfig::default(),
            bidirectional: scoring.bidirectional,
            bin_count: 10,
            mode: ScoreMode::Raw,
            max_delete: DEFAULT_MAX_DELETE,
            max_bug_lines: DEFAULT_MAX_BUG_LINES,
            credit: CreditMode::Full,
            budget: DEFAULT_BUDGET,
            rank_by: RankBy::Score,
            seed: None,
            runs: DEFAULT_RUNS,
            bootstrap: 1000,
            sweep_orders: vec![2, 3, 4, 5, 6],
            sweep_weights: vec![0.25, 0.5, 1.0],
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Profile paths in a config file are relative to the file.
        if let (Some(p), Some(dir)) = (&cfg.profile, path.parent()) {
            if p.is_relative() {
                cfg.profile = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            global_order: self.global_order,
            cache: self.cache,
            bidirectional: self.bidirectional,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.global_order == 0 {
            bail!("global_order must be at least 1");
        }
        self.cache.validate()?;
        if self.bin_count < 2 {
            bail!("bin_count must be at least 2, got {}", self.bin_count);
        }
        if self.max_delete == 0 {
            bail!("max_delete must be positive");
        }
        if self.max_bug_lines == 0 {
            bail!("max_bug_lines must be positive");
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            bail!("budget must be in (0, 1], got {}", self.budget);
        }
        if self.runs == 0 {
            bail!("runs must be positive");
        }
        if self.bootstrap == 0 {
            bail!("bootstrap must be positive");
        }
        if self.sweep_orders.is_empty() || self.sweep_weights.is_empty() {
            bail!("sweep needs at least one order and one weight");
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .with_context(|| format!("a seed is required: pass --seed or set `seed` in the config file (${CONFIG_ENV})"))
    }

    /// The config as echoed into output headers. Paths are reduced to the
    /// profile's file name so headers do not depend on where inputs live.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["profile"] = match &self.profile {
            None => serde_json::Value::String("builtin:java".into()),
            Some(p) => serde_json::Value::String(
                p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            ),
        };
        v
    }
}
