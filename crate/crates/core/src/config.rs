//! Run settings as dotted `key = value` text.
//!
//! Keys: `model.*` (see [`ModelConfig::set`]), `train.*` and `grid.m`,
//! `grid.n`, `grid.levels` (same value as `model.levels`). Lines starting with
//! `#` and blank lines are ignored. Unknown keys are rejected.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Level-0 tile columns.
    pub grid_m: usize,
    /// Level-0 tile rows.
    pub grid_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            grid_m: 32,
            grid_n: 32,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "grid.m" => self.grid_m = parse(key, value)?,
            "grid.n" => self.grid_n = parse(key, value)?,
            "grid.levels" => self.model.levels = parse(key, value)?,
            "train.lr" => t.lr = parse(key, value)?,
            "train.weight_decay" => t.weight_decay = parse(key, value)?,
            "train.lr_step" => t.lr_step = parse(key, value)?,
            "train.lr_gamma" => t.lr_gamma = parse(key, value)?,
            "train.max_epochs" => t.max_epochs = parse(key, value)?,
            "train.patience" => t.patience = parse(key, value)?,
            "train.beta" => t.beta = parse(key, value)?,
            "train.lambda_grid" => t.lambda_grid = parse(key, value)?,
            "train.lambda_var" => t.lambda_var = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            k if k.starts_with("model.") => self.model.set(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order.
    pub fn apply<'a>(&mut self, assignments: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for a in assignments {
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{a}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply([line])
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.grid_m == 0 || self.grid_n == 0 {
            return Err(Error::Config("grid.m and grid.n must be >= 1".into()));
        }
        Ok(())
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = format!("grid.m = {}\ngrid.n = {}\n", self.grid_m, self.grid_n);
        for line in self.model.to_kv().lines() {
            let (k, v) = line.split_once('=').expect("key=value");
            s.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in [
            ("train.lr", t.lr.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.lr_step", t.lr_step.to_string()),
            ("train.lr_gamma", t.lr_gamma.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.beta", t.beta.to_string()),
            ("train.lambda_grid", t.lambda_grid.to_string()),
            ("train.lambda_var", t.lambda_var.to_string()),
            ("train.seed", t.seed.to_string()),
        ] {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
