//! The `natbug` command line: argument parsing, config resolution and the
//! four pipeline subcommands.

pub mod commands;
pub mod config;
pub mod formats;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use natbug_core::CreditMode;

pub use config::{RankBy, RunConfig, ScoreMode, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "natbug", version, about = "Rank source lines by naturalness and evaluate the rankings")]
pub struct Cli {
    /// TOML config file. Flags override its values; it overrides built-in defaults.
    #[arg(long, global = true, env = "NATBUG_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads [default: one per core]. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label buggy, fixed and unchanged lines from a snapshot history.
    Mine(MineArgs),
    /// Score every line of a snapshot.
    Score(ScoreArgs),
    /// Evaluate line orderings against mined bugs.
    Eval(EvalArgs),
    /// Entropy gap of buggy lines across cache parameters.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Directory holding `snapshots/<ISO-date>/` and `commits.jsonl`.
    #[arg(long)]
    pub history: PathBuf,
    /// Output linesets.jsonl [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-file-commit deleted-line limit [default: 30]. Presets: 2, 5, 10, 20, 30.
    #[arg(long)]
    pub max_delete: Option<usize>,
}

/// Model settings shared by `score` and `sweep`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Language profile TOML [default: built-in Java].
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Global n-gram order [default: 3].
    #[arg(long)]
    pub global_order: Option<usize>,
    /// Longest cache n-gram [default: 10].
    #[arg(long)]
    pub max_cache_order: Option<usize>,
    /// Shortest cache n-gram consulted [default: 4].
    #[arg(long)]
    pub min_backoff_order: Option<usize>,
    /// Multiplier per global backoff step [default: 1].
    #[arg(long)]
    pub backoff_weight: Option<f64>,
    /// Cache concentration [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Score from the prolog only [default: prolog and epilog].
    #[arg(long)]
    pub forward_only: bool,
    /// Cross-validation bins [default: 10].
    #[arg(long)]
    pub bin_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Tsv,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Source tree to score.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: Format,
    /// Score column [default: raw].
    #[arg(long, value_enum)]
    pub mode: Option<ScoreMode>,
    /// Bug weight table for `wtype`.
    #[arg(long, conflicts_with_all = ["train_history", "train_linesets"])]
    pub weights: Option<PathBuf>,
    /// History directory whose snapshots the training linesets refer to.
    #[arg(long, requires = "train_linesets")]
    pub train_history: Option<PathBuf>,
    /// Linesets to train bug weights from.
    #[arg(long, requires = "train_history")]
    pub train_linesets: Option<PathBuf>,
    /// Write the trained weight table here.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Line scores from `score` (jsonl or tsv).
    #[arg(long)]
    pub scores: PathBuf,
    /// Linesets from `mine`.
    #[arg(long)]
    pub linesets: PathBuf,
    /// Snapshot whose bugs to use; required when the linesets hold several.
    #[arg(long)]
    pub snapshot_label: Option<String>,
    /// Static-analysis warnings (jsonl).
    #[arg(long)]
    pub warnings: Option<PathBuf>,
    /// Directory for summary.json and curve files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Credit mode [default: full].
    #[arg(long)]
    pub credit: Option<CreditMode>,
    /// Inspection budget as a fraction of lines [default: 0.05].
    #[arg(long)]
    pub budget: Option<f64>,
    /// Seed for simulated orderings and the bootstrap (required here or in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated static-bug-finder runs [default: 100].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Drop bugs touching this many lines or more [default: 15].
    #[arg(long)]
    pub max_bug_lines: Option<usize>,
    /// Which score orders lines [default: score].
    #[arg(long, value_enum)]
    pub rank_by: Option<RankBy>,
    /// Bootstrap resamples for the entropy comparison [default: 1000].
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// History directory whose snapshots the linesets refer to.
    #[arg(long)]
    pub history: PathBuf,
    /// Linesets supplying the buggy labels.
    #[arg(long)]
    pub linesets: Option<PathBuf>,
    /// Cache orders to try [default: 2,3,4,5,6].
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Backoff weights to try [default: 0.25,0.5,1].
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Output TSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.profile.is_some() {
            cfg.profile.clone_from(&self.profile);
        }
        set(&mut cfg.global_order, self.global_order);
        set(&mut cfg.cache.max_cache_order, self.max_cache_order);
        set(&mut cfg.cache.min_backoff_order, self.min_backoff_order);
        set(&mut cfg.cache.backoff_weight, self.backoff_weight);
        set(&mut cfg.cache.gamma, self.gamma);
        if self.forward_only {
            cfg.bidirectional = false;
        }
        set(&mut cfg.bin_count, self.bin_count);
    }
}

impl Cli {
    /// Defaults, then the config file, then this command's flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        match &self.command {
            Command::Mine(a) => set(&mut cfg.max_delete, a.max_delete),
            Command::Score(a) => {
                a.model.apply(&mut cfg);
                set(&mut cfg.mode, a.mode);
            }
            Command::Eval(a) => {
                set(&mut cfg.credit, a.credit);
                set(&mut cfg.budget, a.budget);
                if a.seed.is_some() {
                    cfg.seed = a.seed;
                }
                set(&mut cfg.runs, a.runs);
                set(&mut cfg.max_bug_lines, a.max_bug_lines);
                set(&mut cfg.rank_by, a.rank_by);
                set(&mut cfg.bootstrap, a.bootstrap);
            }
            Command::Sweep(a) => {
                a.model.apply(&mut cfg);
                set(&mut cfg.sweep_orders, a.orders.clone());
                set(&mut cfg.sweep_weights, a.weights.clone());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("setting up the worker pool")?;
    }
    match &cli.command {
        Command::Mine(a) => commands::mine(&cfg, a),
        Command::Score(a) => commands::score(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Sweep(a) => commands::sweep(&cfg, a),
    }
}
