//! Command-line entry point.
//!
//! Settings resolve as defaults, then the `--config` file, then flags.

use std::ffi::OsString;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::augmentation::{removal_probabilities, sample_view, View};
use crate::centrality::{edge_centrality, node_centrality, Measure};
use crate::encoder::{Aggregator, Model};
use crate::error::{create_file, Error, Result};
use crate::harness::{
    self, evaluate_all, evaluate_node_classification, load_checkpoint, run_experiment, save_checkpoint, sweep,
    write_sweep_csv, MetricsReport, SweepParam, TrainConfig,
};
use crate::pruning::prune_by_centrality;
use crate::temporal_graph::{ingest_csv, write_cache_file, write_csv, EventStream, IngestOptions};

pub const DATA_DIR_ENV: &str = "TGAC_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "tgac", version, about = "Centrality-pruned, contrastively trained temporal graph encoder")]
pub struct Cli {
    /// key=value file applied before flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a CSV event list and summarise it.
    Ingest(IngestArgs),
    /// Node centrality scores as CSV.
    Centrality(CentralityArgs),
    /// Drop the lowest-centrality events.
    Prune(PruneArgs),
    /// Sample one augmented view.
    Augment(AugmentArgs),
    /// Train and evaluate link prediction.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Dynamic node classification on a frozen encoder.
    Classify(EvalArgs),
    /// One training run per value of a parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Event CSV; relative paths fall back to $TGAC_DATA_DIR.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub directed: Option<bool>,

    /// Source and destination ids live in separate namespaces.
    #[arg(long)]
    pub bipartite: bool,
}

/// Every training key as an optional flag.
#[derive(Debug, Default, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "batch_size", alias = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Sets both views' drop scale.
    #[arg(long = "p_e", alias = "pe")]
    pub p_e: Option<f64>,
    #[arg(long = "p_e1", alias = "pe1")]
    pub p_e1: Option<f64>,
    #[arg(long = "p_e2", alias = "pe2")]
    pub p_e2: Option<f64>,
    #[arg(long = "p_r", alias = "pr")]
    pub p_r: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub measure: Option<Measure>,
    #[arg(long = "d_mem", alias = "d-mem")]
    pub d_mem: Option<usize>,
    #[arg(long = "d_msg", alias = "d-msg")]
    pub d_msg: Option<usize>,
    #[arg(long = "d_emb", alias = "d-emb")]
    pub d_emb: Option<usize>,
    #[arg(long = "d_time", alias = "d-time")]
    pub d_time: Option<usize>,
    #[arg(long = "n_neighbors", alias = "n-neighbors")]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    pub aggregator: Option<Aggregator>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long = "no_prune", alias = "no-prune")]
    pub no_prune: bool,
    #[arg(long = "no_cl", alias = "no-cl")]
    pub no_cl: bool,
    #[arg(long = "inductive_frac", alias = "inductive-frac")]
    pub inductive_frac: Option<f64>,
    #[arg(long = "cls_epochs", alias = "cls-epochs")]
    pub cls_epochs: Option<usize>,
    #[arg(long = "cls_lr", alias = "cls-lr")]
    pub cls_lr: Option<f64>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { out.push(($key, v.to_string())); })*
            };
        }
        push!(
            lr => "lr", batch_size => "batch_size", epochs => "epochs", seed => "seed",
            lambda => "lambda", alpha => "alpha", c => "c", p_e => "p_e", p_e1 => "p_e1",
            p_e2 => "p_e2", p_r => "p_r", tau => "tau", measure => "measure", d_mem => "d_mem",
            d_msg => "d_msg", d_emb => "d_emb", d_time => "d_time", n_neighbors => "n_neighbors",
            dropout => "dropout", patience => "patience", inductive_frac => "inductive_frac",
            cls_epochs => "cls_epochs", cls_lr => "cls_lr",
        );
        if let Some(a) = self.aggregator {
            out.push(("aggregator", if a == Aggregator::Mean { "mean" } else { "last" }.into()));
        }
        if self.no_prune {
            out.push(("no_prune", "true".into()));
        }
        if self.no_cl {
            out.push(("no_cl", "true".into()));
        }
        out
    }
}

impl clap::ValueEnum for Measure {
    fn value_variants<'a>() -> &'a [Self] {
        &[Measure::Degree, Measure::Eigenvector, Measure::PageRank]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Measure::Degree => "de",
            Measure::Eigenvector => "ev",
            Measure::PageRank => "pr",
        }))
    }
}

impl clap::ValueEnum for Aggregator {
    fn value_variants<'a>() -> &'a [Self] {
        &[Aggregator::Last, Aggregator::Mean]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Aggregator::Last => "last",
            Aggregator::Mean => "mean",
        }))
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write the stream to a binary cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CentralityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub measure: Option<Measure>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Write the retained events as CSV.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub view: u8,
    #[arg(long, default_value_t = 0)]
    pub step: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Without one, the freshly initialised encoder is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long)]
    pub param: String,
    /// Comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}

/// Existing paths win; otherwise a relative path is looked up under
/// `$TGAC_DATA_DIR`.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

fn resolve_config(file: Option<&Path>, flags: &ConfigFlags, directed: Option<bool>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv(&text)?;
    }
    for (key, value) in flags.pairs() {
        cfg.set(key, &value).map_err(|e| Error::config(format!("--{key}: {e}")))?;
    }
    if let Some(d) = directed {
        cfg.directed = d;
    }
    for line in cfg.to_kv_string().lines() {
        info!("config {line}");
    }
    Ok(cfg)
}

fn ingest(data: &DataArgs, directed: bool) -> Result<EventStream> {
    let path = resolve_data_path(&data.data);
    let opts = IngestOptions {
        directed,
        bipartite: data.bipartite,
        ..IngestOptions::default()
    };
    let ingested = ingest_csv(&path, &opts)?;
    if ingested.unsorted_rows > 0 {
        log::warn!("{} rows were out of order and have been sorted", ingested.unsorted_rows);
    }
    Ok(ingested.stream)
}

struct Output {
    inner: Box<dyn Write>,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(create_file(p)?)),
            None => Box::new(io::stdout().lock()),
        };
        Ok(Output { inner })
    }

    fn json(&mut self, value: &impl Serialize) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.inner, value).map_err(io::Error::from)?;
        writeln!(self.inner)?;
        Ok(())
    }

    fn report(&mut self, report: &MetricsReport, format: Format) -> Result<()> {
        match format {
            Format::Json => report.write_json(&mut self.inner),
            Format::Csv => report.write_csv(&mut self.inner),
        }
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct StreamSummary {
    events: usize,
    nodes: usize,
    feat_dim: usize,
    directed: bool,
    labelled: bool,
    max_time: f64,
}

impl StreamSummary {
    fn of(s: &EventStream) -> Self {
        StreamSummary {
            events: s.len(),
            nodes: s.num_nodes(),
            feat_dim: s.feat_dim(),
            directed: s.directed(),
            labelled: s.has_labels(),
            max_time: s.max_time().unwrap_or(0.0),
        }
    }
}

fn model_for(cfg: &TrainConfig, checkpoint: Option<&Path>, feat_dim: usize) -> Result<Model> {
    match checkpoint {
        Some(p) => load_checkpoint(p, cfg, feat_dim),
        None => Model::new(cfg.model(feat_dim), cfg.seed),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = cli.config.as_deref();
    let mut out = Output::open(cli.out.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => {
            let cfg = resolve_config(file, &ConfigFlags::default(), a.data.directed)?;
            let stream = ingest(&a.data, cfg.directed)?;
            if let Some(p) = &a.cache {
                write_cache_file(&stream, p)?;
            }
            out.json(&StreamSummary::of(&stream))?
        }
        Command::Centrality(a) => {
            let flags = ConfigFlags { measure: a.measure, ..Default::default() };
            let cfg = resolve_config(file, &flags, a.data.directed)?;
            let stream = ingest(&a.data, cfg.directed)?;
            node_centrality(&stream, cfg.measure)?.write_csv(&stream, &mut out.inner)?
        }
        Command::Prune(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            cfg.prune().validate()?;
            let stream = ingest(&a.data, cfg.directed)?;
            let ratios = crate::temporal_graph::SplitRatios::default();
            let (stream, _) = crate::temporal_graph::normalize_time(&stream, ratios.boundaries(stream.len()).0)?;
            let pruned = prune_by_centrality(&stream, &cfg.prune())?;
            if let Some(p) = &a.events {
                write_csv(&pruned.stream, BufWriter::new(create_file(p.as_ref())?))?;
            }
            #[derive(Serialize)]
            struct PruneSummary {
                c: f64,
                measure: String,
                alpha: f64,
                input_events: usize,
                retained_events: usize,
            }
            out.json(&PruneSummary {
                c: cfg.c,
                measure: cfg.measure.to_string(),
                alpha: cfg.alpha,
                input_events: stream.len(),
                retained_events: pruned.stream.len(),
            })?
        }
        Command::Augment(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            let aug = cfg.augment();
            aug.validate()?;
            let view = match a.view {
                1 => View::First,
                2 => View::Second,
                v => return Err(Error::config(format!("--view {v}: expected 1 or 2"))),
            };
            let stream = ingest(&a.data, cfg.directed)?;
            let ratios = crate::temporal_graph::SplitRatios::default();
            let (normalized, _) = crate::temporal_graph::normalize_time(&stream, ratios.boundaries(stream.len()).0)?;
            let table = node_centrality(&normalized, cfg.measure)?;
            let scored = edge_centrality(&normalized, &table, cfg.alpha, normalized.directed());
            let probs = removal_probabilities(&scored.weight, aug.p_e(view), aug.p_r);
            let mask_seed = aug.view_seed(view);
            let kept = sample_view(&stream, &probs, mask_seed, a.step)?;
            info!("view {} kept {} of {} events", a.view, kept.len(), stream.len());
            write_csv(&kept, &mut out.inner)?
        }
        Command::Train(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            cfg.validate()?;
            let stream = ingest(&a.data, cfg.directed)?;
            let prepared = harness::prepare(&stream, &cfg)?;
            let (model, report) = run_experiment(&prepared.split, &cfg)?;
            if let Some(p) = &a.checkpoint {
                save_checkpoint(&model, &cfg, p)?;
            }
            out.report(&report, cli.format)?
        }
        Command::Eval(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            cfg.validate()?;
            let stream = ingest(&a.data, cfg.directed)?;
            let prepared = harness::prepare(&stream, &cfg)?;
            let model = model_for(&cfg, a.checkpoint.as_deref(), stream.feat_dim())?;
            let mut report = MetricsReport::new(&cfg);
            evaluate_all(&model, &prepared.split, &cfg, &mut report)?;
            out.report(&report, cli.format)?
        }
        Command::Classify(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            cfg.validate()?;
            let stream = ingest(&a.data, cfg.directed)?;
            let prepared = harness::prepare(&stream, &cfg)?;
            let mut model = model_for(&cfg, a.checkpoint.as_deref(), stream.feat_dim())?;
            let mut report = MetricsReport::new(&cfg);
            report.node_classification = Some(evaluate_node_classification(&mut model, &prepared.split, &cfg)?);
            out.report(&report, cli.format)?
        }
        Command::Sweep(a) => {
            let cfg = resolve_config(file, &a.flags, a.data.directed)?;
            cfg.validate()?;
            let param: SweepParam = a.param.parse()?;
            let stream = ingest(&a.data, cfg.directed)?;
            let prepared = harness::prepare(&stream, &cfg)?;
            let rows = sweep(&prepared.split, &cfg, param, &a.values)?;
            write_sweep_csv(&rows, &mut out.inner)?
        }
    }
    out.finish()
}

/// Parses `args` and runs; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("tgac").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "lr=0.5\nepochs=3\nc=0.2\n").unwrap();
        let cli = parse(&["train", "--data", "x.csv", "--epochs", "7", "--pe", "0.3"]);
        let Command::Train(a) = &cli.command else { panic!() };
        let cfg = resolve_config(Some(&file), &a.flags, Some(false)).unwrap();
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.c, 0.2);
        assert_eq!((cfg.p_e1, cfg.p_e2), (0.3, 0.3));
        assert!(cfg.batch_size == 200 && !cfg.directed);
    }

    #[test]
    fn ablation_flags_and_enums() {
        let cli = parse(&["train", "--data", "x", "--no-prune", "--no_cl", "--measure", "pr", "--aggregator", "mean"]);
        let Command::Train(a) = &cli.command else { panic!() };
        let cfg = resolve_config(None, &a.flags, None).unwrap();
        assert!(cfg.no_prune && cfg.no_cl);
        assert_eq!(cfg.measure, Measure::PageRank);
        assert_eq!(cfg.aggregator, Aggregator::Mean);
    }

    #[test]
    fn unknown_flags_exit_one() {
        assert_eq!(run(["tgac", "train", "--data", "x", "--bogus", "1"]), 1);
        assert_eq!(run(["tgac", "frobnicate"]), 1);
    }

    #[test]
    fn data_dir_fallback() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("events.csv"), "0,1,0\n").unwrap();
        // Only this test touches the variable.
        std::env::set_var(DATA_DIR_ENV, dir.path());
        assert_eq!(resolve_data_path(Path::new("events.csv")), dir.path().join("events.csv"));
        assert_eq!(resolve_data_path(Path::new("missing.csv")), PathBuf::from("missing.csv"));
        std::env::remove_var(DATA_DIR_ENV);
    }
}
