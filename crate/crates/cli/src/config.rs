//! Flat `key = value` run configuration.
//!
//! Precedence: command-line flags, then the config file, then defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cfree_bench::BenchConfig;
use cfree_core::cgan::{ArchConfig, TrainConfig};
use cfree_core::evaluation::EvalConfig;
use cfree_core::planner::PlannerConfig;
use cfree_core::scenarios::GenerationConfig;
use cfree_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub count: usize,
    pub generation: GenerationConfig,
    pub folds: usize,
    pub fold_seed: u64,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub hist_bins: usize,
    pub planner: PlannerConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            count: 100,
            generation: GenerationConfig::default(),
            folds: 5,
            fold_seed: 0,
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            hist_bins: 10,
            planner: PlannerConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value {value:?} for {key}")))
}

pub const KEYS: &[&str] = &[
    "seed",
    "count",
    "min_obstacles",
    "max_obstacles",
    "min_size",
    "max_size",
    "circle_probability",
    "folds",
    "fold_seed",
    "conv1_channels",
    "conv2_channels",
    "cond_features",
    "hidden",
    "epochs",
    "batch_size",
    "scenarios_per_step",
    "lambda_identity",
    "lambda_fm",
    "lr",
    "beta1",
    "beta2",
    "checkpoint_every",
    "dtheta",
    "hist_bins",
    "grid_n",
    "line_steps",
    "densify",
    "bench_repetitions",
    "bench_queries",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "count" => self.count = parse(key, v)?,
            "min_obstacles" => self.generation.min_obstacles = parse(key, v)?,
            "max_obstacles" => self.generation.max_obstacles = parse(key, v)?,
            "min_size" => self.generation.min_size = parse(key, v)?,
            "max_size" => self.generation.max_size = parse(key, v)?,
            "circle_probability" => self.generation.circle_probability = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "fold_seed" => self.fold_seed = parse(key, v)?,
            "conv1_channels" => self.arch.conv1_channels = parse(key, v)?,
            "conv2_channels" => self.arch.conv2_channels = parse(key, v)?,
            "cond_features" => self.arch.cond_features = parse(key, v)?,
            "hidden" => self.arch.hidden = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "scenarios_per_step" => self.train.scenarios_per_step = parse(key, v)?,
            "lambda_identity" => self.train.lambda_identity = parse(key, v)?,
            "lambda_fm" => self.train.lambda_fm = parse(key, v)?,
            "lr" => self.train.adam.lr = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(key, v)?,
            "dtheta" => self.eval.dtheta = parse(key, v)?,
            "hist_bins" => self.hist_bins = parse(key, v)?,
            "grid_n" => self.planner.grid_n = parse(key, v)?,
            "line_steps" => self.planner.line_steps = parse(key, v)?,
            "densify" => self.planner.densify = parse(key, v)?,
            "bench_repetitions" => self.bench.repetitions = parse(key, v)?,
            "bench_queries" => self.bench.queries = parse(key, v)?,
            other => {
                return Err(Error::Usage(format!(
                    "unknown config key {other:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override {p:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// The training seed follows the global seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            seed: self.seed,
            ..self.bench
        }
    }

    pub fn hash(&self) -> String {
        cfree_core::config_hash(self)
    }
}
