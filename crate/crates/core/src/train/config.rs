use std::path::Path;

use crate::{Error, Result};

/// Optimization hyperparameters. Parsed from `key = value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Chunks per minibatch.
    pub batch_size: usize,
    pub bptt_steps: usize,
    pub val_fraction: f64,
    pub patience_epochs: usize,
    pub min_rel_improvement: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub clip_norm: f64,
    pub early_stopping: bool,
    /// Stop as soon as the epoch's training MSE falls below this value.
    pub target_train_mse: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            bptt_steps: 21,
            val_fraction: 0.1,
            patience_epochs: 5,
            min_rel_improvement: 0.01,
            max_epochs: 100,
            seed: 0,
            clip_norm: 5.0,
            early_stopping: true,
            target_train_mse: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format("train config", format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "bptt_steps" => self.bptt_steps = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "patience_epochs" => self.patience_epochs = parse(key, value)?,
            "min_rel_improvement" => self.min_rel_improvement = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "early_stopping" => self.early_stopping = parse(key, value)?,
            "target_train_mse" => {
                self.target_train_mse = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => return Err(Error::format("train config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Overrides defaults from `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("train config", format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction must lie in (0, 1)");
        }
        if self.bptt_steps == 0 || self.patience_epochs == 0 || self.batch_size == 0 {
            return fail("bptt_steps, patience_epochs and batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return fail("Adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.clip_norm < 0.0 || self.min_rel_improvement < 0.0 {
            return fail("clip_norm and min_rel_improvement must be non-negative");
        }
        Ok(())
    }
}
