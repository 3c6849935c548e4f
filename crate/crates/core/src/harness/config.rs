use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::AugmentConfig;
use crate::centrality::Measure;
use crate::encoder::{Aggregator, ModelConfig};
use crate::error::{Error, Result};
use crate::pruning::PruneConfig;

/// Every knob of a training run. Keys of the `key=value` form match the
/// field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub p_e1: f64,
    pub p_e2: f64,
    pub p_r: f64,
    pub tau: f64,
    pub measure: Measure,
    pub d_mem: usize,
    pub d_msg: usize,
    pub d_emb: usize,
    pub d_time: usize,
    pub n_neighbors: usize,
    pub aggregator: Aggregator,
    pub dropout: f64,
    pub patience: usize,
    pub no_prune: bool,
    pub no_cl: bool,
    pub inductive_frac: f64,
    pub directed: bool,
    pub cls_epochs: usize,
    pub cls_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 200,
            epochs: 10,
            seed: 0,
            lambda: 0.1,
            alpha: 10.0,
            c: 0.05,
            p_e1: 0.4,
            p_e2: 0.4,
            p_r: 0.7,
            tau: 0.5,
            measure: Measure::Eigenvector,
            d_mem: 172,
            d_msg: 100,
            d_emb: 100,
            d_time: 100,
            n_neighbors: 10,
            aggregator: Aggregator::Last,
            dropout: 0.1,
            patience: 5,
            no_prune: false,
            no_cl: false,
            inductive_frac: 0.1,
            directed: true,
            cls_epochs: 20,
            cls_lr: 1e-3,
        }
    }
}

pub const KEYS: &[&str] = &[
    "lr",
    "batch_size",
    "epochs",
    "seed",
    "lambda",
    "alpha",
    "c",
    "p_e1",
    "p_e2",
    "p_r",
    "tau",
    "measure",
    "d_mem",
    "d_msg",
    "d_emb",
    "d_time",
    "n_neighbors",
    "aggregator",
    "dropout",
    "patience",
    "no_prune",
    "no_cl",
    "inductive_frac",
    "directed",
    "cls_epochs",
    "cls_lr",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "p_e1" => self.p_e1 = parse(key, value)?,
            "p_e2" => self.p_e2 = parse(key, value)?,
            "p_e" => {
                self.p_e1 = parse(key, value)?;
                self.p_e2 = self.p_e1;
            }
            "p_r" => self.p_r = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "measure" => self.measure = value.trim().parse()?,
            "d_mem" => self.d_mem = parse(key, value)?,
            "d_msg" => self.d_msg = parse(key, value)?,
            "d_emb" => self.d_emb = parse(key, value)?,
            "d_time" => self.d_time = parse(key, value)?,
            "n_neighbors" => self.n_neighbors = parse(key, value)?,
            "aggregator" => self.aggregator = value.trim().parse()?,
            "dropout" => self.dropout = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "no_prune" => self.no_prune = parse(key, value)?,
            "no_cl" => self.no_cl = parse(key, value)?,
            "inductive_frac" => self.inductive_frac = parse(key, value)?,
            "directed" => self.directed = parse(key, value)?,
            "cls_epochs" => self.cls_epochs = parse(key, value)?,
            "cls_lr" => self.cls_lr = parse(key, value)?,
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "lambda" => self.lambda.to_string(),
            "alpha" => self.alpha.to_string(),
            "c" => self.c.to_string(),
            "p_e1" => self.p_e1.to_string(),
            "p_e2" => self.p_e2.to_string(),
            "p_r" => self.p_r.to_string(),
            "tau" => self.tau.to_string(),
            "measure" => self.measure.to_string(),
            "d_mem" => self.d_mem.to_string(),
            "d_msg" => self.d_msg.to_string(),
            "d_emb" => self.d_emb.to_string(),
            "d_time" => self.d_time.to_string(),
            "n_neighbors" => self.n_neighbors.to_string(),
            "aggregator" => match self.aggregator {
                Aggregator::Last => "last".into(),
                Aggregator::Mean => "mean".into(),
            },
            "dropout" => self.dropout.to_string(),
            "patience" => self.patience.to_string(),
            "no_prune" => self.no_prune.to_string(),
            "no_cl" => self.no_cl.to_string(),
            "inductive_frac" => self.inductive_frac.to_string(),
            "directed" => self.directed.to_string(),
            "cls_epochs" => self.cls_epochs.to_string(),
            "cls_lr" => self.cls_lr.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected key=value", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).expect("listed key"));
        }
        out
    }

    /// First eight bytes of the SHA-256 of the `key=value` form.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_kv_string().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn model(&self, feat_dim: usize) -> ModelConfig {
        ModelConfig {
            d_mem: self.d_mem,
            d_msg: self.d_msg,
            d_emb: self.d_emb,
            d_time: self.d_time,
            feat_dim,
            n_neighbors: self.n_neighbors,
            aggregator: self.aggregator,
            dropout: self.dropout,
            ..ModelConfig::default()
        }
    }

    pub fn prune(&self) -> PruneConfig {
        PruneConfig {
            c: if self.no_prune { 0.0 } else { self.c },
            measure: self.measure,
            alpha: self.alpha,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            p_e1: self.p_e1,
            p_e2: self.p_e2,
            p_r: self.p_r,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("`{name}`={v} must be positive")))
            }
        };
        positive("lr", self.lr)?;
        positive("tau", self.tau)?;
        positive("cls_lr", self.cls_lr)?;
        if self.batch_size == 0 {
            return Err(Error::config("`batch_size` must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("`lambda`={} must be nonnegative", self.lambda)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config(format!("`alpha`={} must be nonnegative", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.inductive_frac) {
            return Err(Error::config(format!(
                "`inductive_frac`={} must lie in [0, 1)",
                self.inductive_frac
            )));
        }
        PruneConfig { c: self.c, ..self.prune() }.validate()?;
        self.augment().validate()?;
        self.model(0).validate()
    }
}
