use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::Result;

/// Probability that a random positive outranks a random negative, ties
/// counting one half. `NaN` when either side is empty.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mid-ranks of tie groups, 1-based.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (p, n) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - p * (p + 1.0) / 2.0) / (p * n)
}

/// Average precision: precision at each distinct score threshold, weighted
/// by the recall gained there, scanning scores from high to low.
pub fn ap(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = pos.len() as f64;
    let (mut tp, mut seen, mut out) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut gained = 0;
        while j < all.len() && all[j].0 == all[i].0 {
            gained += all[j].1 as usize;
            j += 1;
        }
        tp += gained;
        seen += j - i;
        out += (gained as f64 / total) * (tp as f64 / seen as f64);
        i = j;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub auc: f64,
    pub ap: f64,
    pub events: usize,
}

impl LinkMetrics {
    pub fn from_scores(pos: &[f64], neg: &[f64]) -> Self {
        LinkMetrics {
            auc: auc(pos, neg),
            ap: ap(pos, neg),
            events: pos.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub task_loss: f64,
    pub cl_loss: f64,
    pub steps: usize,
    pub val: LinkMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub auc: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub num_nodes: usize,
    pub train_events: usize,
    pub val_events: usize,
    pub test_events: usize,
    pub pruned_train_events: usize,
    pub inductive_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub config_hash: String,
    pub data: DataSummary,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub val: Option<LinkMetrics>,
    pub test: Option<LinkMetrics>,
    pub inductive: Option<LinkMetrics>,
    pub node_classification: Option<ClassMetrics>,
    /// Logged, never serialised, so reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn new(config: &TrainConfig) -> Self {
        MetricsReport {
            config: config.clone(),
            seed: config.seed,
            config_hash: format!("{:016x}", config.hash()),
            data: DataSummary::default(),
            epochs: Vec::new(),
            best_epoch: None,
            val: None,
            test: None,
            inductive: None,
            node_classification: None,
            wall_clock_secs: 0.0,
        }
    }

    pub fn write_json(&self, mut out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
        writeln!(out)?;
        Ok(())
    }

    pub const CSV_HEADER: &'static str =
        "seed,config_hash,best_epoch,val_auc,val_ap,test_auc,test_ap,inductive_auc,inductive_ap,node_cls_auc";

    pub fn csv_row(&self) -> String {
        let f = |m: Option<f64>| m.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.config_hash,
            self.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            f(self.val.map(|m| m.auc)),
            f(self.val.map(|m| m.ap)),
            f(self.test.map(|m| m.auc)),
            f(self.test.map(|m| m.ap)),
            f(self.inductive.map(|m| m.auc)),
            f(self.inductive.map(|m| m.ap)),
            f(self.node_classification.as_ref().map(|m| m.auc)),
        )
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())?;
        Ok(())
    }
}
