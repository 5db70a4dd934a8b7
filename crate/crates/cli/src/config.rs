//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use fcn_core::features::discretizers;
use fcn_core::model::ModelConfig;
use fcn_core::objective::objectives;
use fcn_core::training::TrainConfig;

use crate::error::{CliError, CliResult};

pub const KEYS: [&str; 15] = [
    "d",
    "lcn_depth",
    "ecn_depth",
    "mask",
    "dropout",
    "ln_epsilon",
    "loss",
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
    "seed",
    "discretize",
    "min_count",
    "numeric_fields",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub lcn_depth: usize,
    pub ecn_depth: usize,
    pub mask: String,
    pub dropout: f64,
    pub ln_epsilon: f64,
    pub loss: String,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub discretize: String,
    pub min_count: u32,
    /// Columns bucketed by the discretizer instead of read as categories.
    pub numeric_fields: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        Self {
            d: model.d,
            lcn_depth: model.lcn_depth,
            ecn_depth: model.ecn_depth,
            mask: model.mask.name().to_string(),
            dropout: model.dropout_rate,
            ln_epsilon: model.ln_epsilon,
            loss: train.loss.name().to_string(),
            lr: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            seed: model.seed,
            discretize: "lnsq".to_string(),
            min_count: 10,
            numeric_fields: Vec::new(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("config line {line}: cannot parse `{raw}` for `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {line_no}: expected `key = value`")));
            };
            let (key, raw) = (key.trim(), raw.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(CliError::Usage(format!(
                    "config line {line_no}: unknown key `{key}` (valid keys: {})",
                    KEYS.join(", ")
                )));
            };
            if seen.contains(&known) {
                return Err(CliError::Usage(format!("config line {line_no}: `{key}` set twice")));
            }
            seen.push(known);
            match known {
                "d" => cfg.d = value(key, raw, line_no)?,
                "lcn_depth" => cfg.lcn_depth = value(key, raw, line_no)?,
                "ecn_depth" => cfg.ecn_depth = value(key, raw, line_no)?,
                "mask" => cfg.mask = raw.to_string(),
                "dropout" => cfg.dropout = value(key, raw, line_no)?,
                "ln_epsilon" => cfg.ln_epsilon = value(key, raw, line_no)?,
                "loss" => cfg.loss = raw.to_string(),
                "lr" => cfg.lr = value(key, raw, line_no)?,
                "batch_size" => cfg.batch_size = value(key, raw, line_no)?,
                "max_epochs" => cfg.max_epochs = value(key, raw, line_no)?,
                "patience" => cfg.patience = value(key, raw, line_no)?,
                "seed" => cfg.seed = value(key, raw, line_no)?,
                "discretize" => cfg.discretize = raw.to_string(),
                "min_count" => cfg.min_count = value(key, raw, line_no)?,
                "numeric_fields" => {
                    cfg.numeric_fields = raw
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                _ => unreachable!("every key in KEYS has a branch"),
            }
        }
        cfg.model_config()?;
        cfg.train_config()?;
        discretizers().get(&cfg.discretize)?;
        if cfg.min_count == 0 {
            return Err(CliError::Usage("min_count must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// The effective configuration in the input format; parsing it back
    /// yields an equal value.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{}", format!("{k} = {v}").trim_end());
        };
        put("d", self.d.to_string());
        put("lcn_depth", self.lcn_depth.to_string());
        put("ecn_depth", self.ecn_depth.to_string());
        put("mask", self.mask.clone());
        put("dropout", self.dropout.to_string());
        put("ln_epsilon", self.ln_epsilon.to_string());
        put("loss", self.loss.clone());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("patience", self.patience.to_string());
        put("seed", self.seed.to_string());
        put("discretize", self.discretize.clone());
        put("min_count", self.min_count.to_string());
        put("numeric_fields", self.numeric_fields.join(","));
        s
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let cfg = ModelConfig {
            d: self.d,
            lcn_depth: self.lcn_depth,
            ecn_depth: self.ecn_depth,
            dropout_rate: self.dropout,
            ln_epsilon: self.ln_epsilon,
            seed: self.seed,
            ..ModelConfig::default()
        }
        .with_mask(&self.mask)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            loss: objectives().get(&self.loss)?,
            shuffle_seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
