//! Training, evaluation and sweeps over prepared splits.

mod classify;
mod config;
mod metrics;
mod optim;
pub mod synthetic;
mod train;

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{info, warn};

pub use classify::{classifier_scores, evaluate_node_classification, fit_classifier, labelled_embeddings, LabelledEmbeddings};
pub use config::{TrainConfig, KEYS};
pub use metrics::{ap, auc, ClassMetrics, DataSummary, EpochRecord, LinkMetrics, MetricsReport};
pub use optim::Adam;
pub use train::{evaluate_link_prediction, fit, warm_up, Mode, Segment, StepGraph, Trained, TrainingPlan, ViewSchedule, EVAL_SEED};

use crate::autodiff::ParameterStore;
use crate::encoder::Model;
use crate::error::{create_file, open_file, Error, Result};
use crate::temporal_graph::{
    chronological_split, ingest_csv, normalize_time, EventStream, IngestOptions, Split, SplitRatios, TimeScale,
};

#[derive(Clone, Debug)]
pub struct Prepared {
    pub split: Split,
    pub scale: TimeScale,
}

/// Normalises time by the train prefix and splits 70/15/15.
pub fn prepare(stream: &EventStream, cfg: &TrainConfig) -> Result<Prepared> {
    let ratios = SplitRatios::default();
    let (train_len, _) = ratios.boundaries(stream.len());
    let (normalized, scale) = normalize_time(stream, train_len)?;
    let split = chronological_split(&normalized, ratios, cfg.inductive_frac, cfg.seed)?;
    Ok(Prepared { split, scale })
}

pub fn load(path: impl AsRef<Path>, cfg: &TrainConfig) -> Result<Prepared> {
    let opts = IngestOptions {
        directed: cfg.directed,
        ..IngestOptions::default()
    };
    let ingested = ingest_csv(path, &opts)?;
    if ingested.unsorted_rows > 0 {
        warn!("{} rows were out of chronological order and have been sorted", ingested.unsorted_rows);
    }
    prepare(&ingested.stream, cfg)
}

fn summary(split: &Split, pruned: usize) -> DataSummary {
    DataSummary {
        num_nodes: split.train.num_nodes(),
        train_events: split.train.len(),
        val_events: split.val.len(),
        test_events: split.test.len(),
        pruned_train_events: pruned,
        inductive_nodes: split.inductive_nodes.len(),
    }
}

/// Link-prediction metrics of a fixed model on val, test and (when any node
/// is held out) the inductive subset of test.
pub fn evaluate_all(model: &Model, split: &Split, cfg: &TrainConfig, report: &mut MetricsReport) -> Result<()> {
    report.val = Some(evaluate_link_prediction(model, split, Segment::Val, Mode::Transductive, cfg.batch_size)?);
    report.test = Some(evaluate_link_prediction(model, split, Segment::Test, Mode::Transductive, cfg.batch_size)?);
    report.inductive = match evaluate_link_prediction(model, split, Segment::Test, Mode::Inductive, cfg.batch_size) {
        Ok(m) => Some(m),
        Err(Error::NoInductiveEvents) => None,
        Err(e) => return Err(e),
    };
    Ok(())
}

/// Trains, then evaluates on every segment.
pub fn run_experiment(split: &Split, cfg: &TrainConfig) -> Result<(Model, MetricsReport)> {
    let clock = Instant::now();
    let trained = fit(split, cfg)?;
    let mut report = MetricsReport::new(cfg);
    report.data = summary(split, trained.pruned_events);
    report.epochs = trained.epochs;
    report.best_epoch = trained.best_epoch;
    evaluate_all(&trained.model, split, cfg, &mut report)?;
    report.wall_clock_secs = clock.elapsed().as_secs_f64();
    info!("run finished in {:.2}s", report.wall_clock_secs);
    Ok((trained.model, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    C,
    Lambda,
    PE,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::C => "c",
            SweepParam::Lambda => "lambda",
            SweepParam::PE => "p_e",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(SweepParam::C),
            "lambda" => Ok(SweepParam::Lambda),
            "p_e" | "pe" => Ok(SweepParam::PE),
            other => Err(Error::config(format!("cannot sweep `{other}` (c, lambda, p_e)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub report: MetricsReport,
}

/// One run per value, every other setting (seed included) held at `base`.
pub fn sweep(split: &Split, base: &TrainConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let configs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.set(param.key(), &v.to_string())?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (cfg, &value) in configs.iter().zip(values) {
        info!("sweep {}={value}", param.key());
        let (_, report) = run_experiment(split, cfg)?;
        rows.push(SweepRow { param, value, report });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "param,value,{}", MetricsReport::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{},{},{}", r.param.key(), r.value, r.report.csv_row())?;
    }
    Ok(())
}

pub fn save_checkpoint(model: &Model, cfg: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(create_file(path.as_ref())?);
    model.store.write_checkpoint(cfg.hash(), &mut out)?;
    out.flush()?;
    Ok(())
}

/// Loads tensors for the model described by `cfg`; a differing config hash
/// only warns, a shape mismatch is an error.
pub fn load_checkpoint(path: impl AsRef<Path>, cfg: &TrainConfig, feat_dim: usize) -> Result<Model> {
    let (store, hash) = ParameterStore::read_checkpoint(BufReader::new(open_file(path.as_ref())?))?;
    if hash != cfg.hash() {
        warn!("checkpoint config hash {hash:016x} differs from the resolved config {:016x}", cfg.hash());
    }
    Model::from_store(cfg.model(feat_dim), store)
}

#[cfg(test)]
mod tests {
    use super::synthetic::{structured_stream, SyntheticConfig};
    use super::*;

    pub(crate) fn tiny() -> TrainConfig {
        TrainConfig {
            d_mem: 8,
            d_msg: 6,
            d_emb: 6,
            d_time: 4,
            n_neighbors: 5,
            batch_size: 50,
            epochs: 2,
            lr: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sweep_param_keys() {
        for p in [SweepParam::C, SweepParam::Lambda, SweepParam::PE] {
            assert_eq!(p.key().parse::<SweepParam>().unwrap(), p);
        }
        assert!("tau".parse::<SweepParam>().is_err());
    }

    #[test]
    fn experiment_runs_end_to_end() {
        let stream = structured_stream(&SyntheticConfig { num_events: 600, num_nodes: 30, ..Default::default() });
        let cfg = tiny();
        let prepared = prepare(&stream, &cfg).unwrap();
        let (model, report) = run_experiment(&prepared.split, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert!(report.test.unwrap().auc.is_finite());
        assert_eq!(report.data.train_events, prepared.split.train.len());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &cfg, &path).unwrap();
        let back = load_checkpoint(&path, &cfg, 0).unwrap();
        assert_eq!(back.store.digest(), model.store.digest());
        let wrong = TrainConfig { d_mem: 9, ..cfg };
        assert!(load_checkpoint(&path, &wrong, 0).is_err());
    }
}
