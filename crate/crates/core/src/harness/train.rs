use std::collections::HashSet;
use std::ops::Range;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::metrics::{EpochRecord, LinkMetrics};
use super::optim::Adam;
use crate::augmentation::{removal_probabilities, sample_mask, View};
use crate::autodiff::{ParameterStore, Tape, Var};
use crate::encoder::{self, Dropout, Model, NodeMemoryBank};
use crate::error::{Error, Result};
use crate::objectives::{contrastive_loss, link_logit, link_loss, total_loss, ContrastBatch};
use crate::pruning::{prune_by_centrality, Pruned};
use crate::temporal_graph::{chronological_batches, EventStream, NodeId, Split};

const DROPOUT_SALT: u64 = 0xD809_0000_0000_0001;
const NEGATIVE_SALT: u64 = 0x0E6A_0000_0000_0002;
/// Evaluation negatives do not depend on the run seed, so every configuration
/// is scored against the same pairs.
pub const EVAL_SEED: u64 = 0xE7A1_5EED;

pub(crate) fn keyed_rng(seed: u64, salt: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(step);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Transductive,
    Inductive,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub pruned_events: usize,
}

/// One augmented copy of the pruned stream for a whole epoch, with batch
/// ranges aligned to the pruned batches.
#[derive(Clone, Debug)]
pub struct ViewSchedule {
    pub stream: EventStream,
    pub ranges: Vec<Range<usize>>,
}

impl ViewSchedule {
    fn build(stream: &EventStream, batches: &[Range<usize>], probs: Option<&[f64]>, seed: u64, first_step: u64) -> Self {
        let Some(probs) = probs else {
            return ViewSchedule {
                stream: stream.clone(),
                ranges: batches.to_vec(),
            };
        };
        let mut kept = Vec::with_capacity(stream.len());
        let mut ranges = Vec::with_capacity(batches.len());
        for (b, r) in batches.iter().enumerate() {
            let start = kept.len();
            let mask = sample_mask(&probs[r.clone()], seed, first_step + b as u64);
            kept.extend(r.clone().zip(mask).filter(|(_, keep)| *keep).map(|(i, _)| i));
            ranges.push(start..kept.len());
        }
        ViewSchedule {
            stream: stream.select(&kept),
            ranges,
        }
    }
}

/// First occurrence of every node in a batch, in order of appearance.
fn anchors(stream: &EventStream, range: Range<usize>) -> Vec<(NodeId, f64)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ev in &stream.events()[range] {
        for u in [ev.src, ev.dst] {
            if seen.insert(u) {
                out.push((u, ev.t));
            }
        }
    }
    out
}

struct ViewLosses {
    task: Option<Var>,
    anchors: Vec<Var>,
}

#[allow(clippy::too_many_arguments)]
fn encode_view(
    model: &Model,
    bank: &mut NodeMemoryBank,
    tape: &mut Tape,
    view: &ViewSchedule,
    batch: usize,
    anchor_points: &[(NodeId, f64)],
    pool: &[NodeId],
    seed: u64,
    step: u64,
) -> Result<ViewLosses> {
    let range = view.ranges[batch].clone();
    let mut dropout_rng = keyed_rng(seed, DROPOUT_SALT, step);
    let mut neg_rng = keyed_rng(seed, NEGATIVE_SALT, step);
    let mut dropout = Dropout {
        rate: model.cfg.dropout,
        rng: &mut dropout_rng,
    };
    let mut mv = encoder::begin_batch(model, bank, tape, &view.stream, range.clone())?;
    let mut pos = Vec::with_capacity(range.len());
    let mut neg = Vec::with_capacity(range.len());
    for ev in &view.stream.events()[range.clone()] {
        let n = pool[neg_rng.random_range(0..pool.len())];
        let zs = encoder::embed(model, bank, &mut mv, tape, ev.src, ev.t, Some(&mut dropout));
        let zd = encoder::embed(model, bank, &mut mv, tape, ev.dst, ev.t, Some(&mut dropout));
        let zn = encoder::embed(model, bank, &mut mv, tape, n, ev.t, Some(&mut dropout));
        pos.push(link_logit(tape, model, zs, zd));
        neg.push(link_logit(tape, model, zs, zn));
    }
    let anchors = anchor_points
        .iter()
        .map(|&(u, t)| encoder::embed(model, bank, &mut mv, tape, u, t, Some(&mut dropout)))
        .collect();
    encoder::finish_batch(bank, &view.stream, range);
    Ok(ViewLosses {
        task: link_loss(tape, &pos, &neg),
        anchors,
    })
}

/// Loss nodes of one optimisation step; `None` where a term has no events.
#[derive(Clone, Copy, Debug)]
pub struct StepGraph {
    pub loss: Option<Var>,
    pub task: Option<Var>,
    pub cl: Option<Var>,
}

/// The pruned stream, its batches and drop probabilities, fixed across epochs.
#[derive(Clone, Debug)]
pub struct TrainingPlan {
    pub pruned: Pruned,
    pub batches: Vec<Range<usize>>,
    /// Per view, aligned with `pruned.stream`.
    pub probs: Vec<Vec<f64>>,
    /// Negative destinations for the task loss.
    pub pool: Vec<NodeId>,
    views: Vec<View>,
    cfg: TrainConfig,
}

impl TrainingPlan {
    pub fn new(train: &EventStream, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::EmptySegment("train"));
        }
        let pruned = prune_by_centrality(train, &cfg.prune())?;
        if pruned.stream.is_empty() {
            return Err(Error::EmptySegment("train"));
        }
        let aug = cfg.augment();
        let probs = View::BOTH
            .iter()
            .map(|&v| removal_probabilities(&pruned.scored.weight, aug.p_e(v), aug.p_r))
            .collect();
        let batches = chronological_batches(pruned.stream.events(), cfg.batch_size);
        let views = if cfg.no_cl { vec![View::First] } else { View::BOTH.to_vec() };
        Ok(TrainingPlan {
            pruned,
            batches,
            probs,
            pool: train.destinations(),
            views,
            cfg: cfg.clone(),
        })
    }

    /// Views for an epoch whose first batch is optimisation step `first_step`.
    pub fn schedules(&self, first_step: u64) -> Vec<ViewSchedule> {
        let aug = self.cfg.augment();
        self.views
            .iter()
            .map(|&v| {
                let p = (!self.cfg.no_cl).then(|| self.probs[v.index()].as_slice());
                ViewSchedule::build(&self.pruned.stream, &self.batches, p, aug.view_seed(v), first_step)
            })
            .collect()
    }

    /// Empty memory, one bank per view.
    pub fn banks(&self, model: &Model) -> Vec<NodeMemoryBank> {
        self.views
            .iter()
            .map(|_| NodeMemoryBank::new(self.pruned.stream.num_nodes(), &model.cfg))
            .collect()
    }

    /// Records the loss of batch `batch` on `tape` and moves every bank past it.
    pub fn step_graph(
        &self,
        model: &Model,
        schedules: &[ViewSchedule],
        banks: &mut [NodeMemoryBank],
        tape: &mut Tape,
        batch: usize,
        step: u64,
    ) -> Result<StepGraph> {
        let cfg = &self.cfg;
        let aug = cfg.augment();
        let points = if cfg.no_cl {
            Vec::new()
        } else {
            anchors(&self.pruned.stream, self.batches[batch].clone())
        };
        let mut tasks = Vec::new();
        let mut anchor_sets = Vec::new();
        for (k, &v) in self.views.iter().enumerate() {
            let out = encode_view(
                model,
                &mut banks[k],
                tape,
                &schedules[k],
                batch,
                &points,
                &self.pool,
                aug.view_seed(v),
                step,
            )?;
            tasks.extend(out.task);
            anchor_sets.push(out.anchors);
        }
        let task = match tasks.len() {
            0 => None,
            1 => Some(tasks[0]),
            _ => Some(tape.sum(&tasks)),
        };
        let cl = if cfg.no_cl {
            None
        } else {
            let second = anchor_sets.pop().expect("two views");
            let first = anchor_sets.pop().expect("two views");
            contrastive_loss(tape, model, &ContrastBatch { first, second, tau: cfg.tau })
        };
        let loss = total_loss(tape, task, cl, cfg.lambda);
        Ok(StepGraph { loss, task, cl })
    }
}

/// Trains on `split.train` and early-stops on validation AUC. The test
/// segment is never read.
pub fn fit(split: &Split, cfg: &TrainConfig) -> Result<Trained> {
    let plan = TrainingPlan::new(&split.train, cfg)?;
    let pruned = &plan.pruned;
    let mut model = Model::new(cfg.model(split.train.feat_dim()), cfg.seed)?;
    info!(
        "pruned train stream: {} of {} events kept (c={}, measure={})",
        pruned.stream.len(),
        split.train.len(),
        cfg.prune().c,
        cfg.measure
    );

    let mut adam = Adam::all(&model.store, cfg.lr);
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, ParameterStore)> = None;
    let mut stale = 0;
    let mut step = 0u64;
    let mut tape = Tape::new();

    for epoch in 0..cfg.epochs {
        let schedules = plan.schedules(step);
        let mut banks = plan.banks(&model);
        let (mut sum_loss, mut sum_task, mut sum_cl, mut steps) = (0.0, 0.0, 0.0, 0usize);

        for (b, range) in plan.batches.iter().enumerate() {
            tape.clear();
            let g = plan.step_graph(&model, &schedules, &mut banks, &mut tape, b, step)?;
            let task_value = g.task.map(|t| tape.scalar(t)).unwrap_or(0.0);
            let cl_value = g.cl.map(|c| tape.scalar(c)).unwrap_or(0.0);
            if let Some(loss) = g.loss {
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Divergence(format!(
                        "epoch {epoch}, batch {b} (events {range:?}, t {}..{}): loss={value}, task={task_value}, cl={cl_value}, tape nodes={}",
                        pruned.stream.event(range.start).t,
                        pruned.stream.event(range.end - 1).t,
                        tape.len()
                    )));
                }
                model.store.zero_grad();
                tape.backward(loss, &mut model.store);
                adam.step(&mut model.store);
                sum_loss += value;
                sum_task += task_value;
                sum_cl += cl_value;
                steps += 1;
            }
            step += 1;
        }

        let val = evaluate_link_prediction(&model, split, Segment::Val, Mode::Transductive, cfg.batch_size)?;
        let mean = |s: f64| if steps > 0 { s / steps as f64 } else { 0.0 };
        let record = EpochRecord {
            epoch,
            loss: mean(sum_loss),
            task_loss: mean(sum_task),
            cl_loss: mean(sum_cl),
            steps,
            val,
        };
        info!(
            "epoch {epoch}: loss {:.5} (task {:.5}, cl {:.5}) val auc {:.4} ap {:.4}",
            record.loss, record.task_loss, record.cl_loss, val.auc, val.ap
        );
        records.push(record);
        if best.as_ref().is_none_or(|(auc, _, _)| val.auc > *auc) {
            best = Some((val.auc, epoch, model.store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                debug!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, store)) = best {
        model.store = store;
    }
    model.store.zero_grad();
    Ok(Trained {
        model,
        epochs: records,
        best_epoch,
        pruned_events: pruned.stream.len(),
    })
}

fn union_destinations(streams: &[&EventStream], num_nodes: usize) -> Vec<NodeId> {
    let mut seen = vec![false; num_nodes];
    for s in streams {
        for e in s.events() {
            seen[e.dst as usize] = true;
        }
    }
    (0..num_nodes as NodeId).filter(|&u| seen[u as usize]).collect()
}

/// Replays `stream` through `bank` without computing embeddings.
pub fn warm_up(model: &Model, bank: &mut NodeMemoryBank, stream: &EventStream, batch_size: usize) -> Result<()> {
    let mut tape = Tape::new();
    for r in chronological_batches(stream.events(), batch_size) {
        tape.clear();
        encoder::advance(model, bank, &mut tape, stream, r)?;
    }
    Ok(())
}

/// Scores every event of the segment against one uniformly drawn negative
/// destination after warming memory up on the preceding segments.
pub fn evaluate_link_prediction(
    model: &Model,
    split: &Split,
    segment: Segment,
    mode: Mode,
    batch_size: usize,
) -> Result<LinkMetrics> {
    if mode == Mode::Inductive && split.inductive_nodes.is_empty() {
        return Err(Error::NoInductiveEvents);
    }
    let num_nodes = split.train.num_nodes();
    let mut bank = NodeMemoryBank::new(num_nodes, &model.cfg);
    warm_up(model, &mut bank, &split.train, batch_size)?;
    let (target, pool) = match segment {
        Segment::Val => (&split.val, union_destinations(&[&split.train, &split.val], num_nodes)),
        Segment::Test => {
            warm_up(model, &mut bank, &split.val, batch_size)?;
            (
                &split.test,
                union_destinations(&[&split.train, &split.val, &split.test], num_nodes),
            )
        }
    };
    if target.is_empty() {
        return Err(Error::EmptySegment(match segment {
            Segment::Val => "val",
            Segment::Test => "test",
        }));
    }
    let mut rng = keyed_rng(EVAL_SEED, 0, segment as u64);
    let negatives: Vec<NodeId> = (0..target.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let scored = |i: usize| {
        let ev = target.event(i);
        mode == Mode::Transductive
            || split.inductive_nodes.contains(&ev.src)
            || split.inductive_nodes.contains(&ev.dst)
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut tape = Tape::new();
    for r in chronological_batches(target.events(), batch_size) {
        tape.clear();
        let negs = &negatives[r.clone()];
        let start = r.start;
        let b = encoder::process_batch::<ChaCha8Rng>(model, &mut bank, &mut tape, target, r, negs, None)?;
        for k in 0..b.src.len() {
            if !scored(start + k) {
                continue;
            }
            let p = link_logit(&mut tape, model, b.src[k], b.dst[k]);
            let n = link_logit(&mut tape, model, b.src[k], b.neg[k]);
            pos.push(tape.scalar(p));
            neg.push(tape.scalar(n));
        }
    }
    if pos.is_empty() {
        return Err(Error::NoInductiveEvents);
    }
    Ok(LinkMetrics::from_scores(&pos, &neg))
}
