//! Flat run configuration shared by `train`, `eval`, `gradcheck` and `ablate`.
//!
//! Values are layered: built-in defaults, then an optional JSON file, then
//! command-line flags. The seed falls back to `BNCL_SEED` when neither the
//! file nor a flag sets it.

use std::path::Path;

use bncl::graph::PercentilePair;
use bncl::loss::LossConfig;
use bncl::trainer::TrainConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "BNCL_SEED";

/// Every key accepted in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_step: usize,
    pub lr_decay: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub sharpness: f64,
    pub disable_l2: bool,
    pub disable_l3: bool,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub depth: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let l = LossConfig::<f64>::default();
        let p = PercentilePair::default();
        RunConfig {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr_step: t.lr_step,
            lr_decay: t.lr_decay,
            alpha2: l.alpha2,
            alpha3: l.alpha3,
            alpha4: l.alpha4,
            sharpness: l.sharpness,
            disable_l2: false,
            disable_l3: false,
            percentile_low: p.low,
            percentile_high: p.high,
            depth: 2,
            seed: t.seed,
        }
    }
}

impl RunConfig {
    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_step: self.lr_step,
            lr_decay: self.lr_decay,
            seed: self.seed,
        }
    }

    pub fn loss(&self) -> LossConfig<f64> {
        LossConfig {
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            alpha4: self.alpha4,
            sharpness: self.sharpness,
            disable_l2: self.disable_l2,
            disable_l3: self.disable_l3,
        }
    }

    pub fn percentiles(&self) -> Result<PercentilePair, CliError> {
        PercentilePair::new(self.percentile_low, self.percentile_high)
            .map_err(|e| CliError::core("config", e))
    }
}

/// Command-line overrides for [`RunConfig`].
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON file with run configuration keys.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr_step: Option<usize>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub alpha3: Option<f64>,
    #[arg(long)]
    pub alpha4: Option<f64>,
    /// Sigmoid sharpness C.
    #[arg(long)]
    pub sharpness: Option<f64>,
    #[arg(long)]
    pub disable_l2: bool,
    #[arg(long)]
    pub disable_l3: bool,
    /// Percentile pair as LOW,HIGH.
    #[arg(long)]
    pub percentiles: Option<String>,
    /// Number of update layers K.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Seed-bearing keys present in a config file, to know whether the env
/// fallback applies.
#[derive(Deserialize)]
struct SeedProbe {
    seed: Option<serde_json::Value>,
}

pub fn load_config_file(path: &Path) -> Result<(RunConfig, bool), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    let probe: SeedProbe = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    Ok((cfg, probe.seed.is_some()))
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
        }),
        Err(_) => Ok(None),
    }
}

impl RunFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let (mut cfg, file_seed) = match &self.config {
            Some(p) => load_config_file(p)?,
            None => (RunConfig::default(), false),
        };
        macro_rules! take {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        take!(
            learning_rate,
            beta1,
            beta2,
            epsilon,
            batch_size,
            epochs,
            lr_step,
            lr_decay,
            alpha2,
            alpha3,
            alpha4,
            sharpness,
            depth
        );
        cfg.disable_l2 |= self.disable_l2;
        cfg.disable_l3 |= self.disable_l3;
        if let Some(p) = &self.percentiles {
            let pair: PercentilePair = p.parse().map_err(|e| CliError::core("config", e))?;
            cfg.percentile_low = pair.low;
            cfg.percentile_high = pair.high;
        }
        match self.seed {
            Some(s) => cfg.seed = s,
            None if !file_seed => {
                if let Some(s) = env_seed()? {
                    cfg.seed = s;
                }
            }
            None => {}
        }
        cfg.train()
            .validate()
            .map_err(|e| CliError::core("config", e))?;
        cfg.loss()
            .validate()
            .map_err(|e| CliError::core("config", e))?;
        cfg.percentiles()?;
        if cfg.depth == 0 {
            return Err(CliError::core(
                "config",
                bncl::Error::Config("depth K must be at least 1".into()),
            ));
        }
        Ok(cfg)
    }
}
