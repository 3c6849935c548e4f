//! Memory-based temporal encoder.
//!
//! Every event leaves a raw message in both endpoints' mailboxes. At the start
//! of the next batch the mailboxes are decoded (affine + tanh), reduced, and
//! folded into memory by a GRU cell on the tape, so message and memory
//! parameters receive gradients through the embeddings of that batch.
//! Embeddings combine a node's memory with single-head attention over its most
//! recent neighbours.

mod memory;
mod model;

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;

pub use memory::{NeighborEntry, NodeMemoryBank};
pub use model::{Aggregator, Model, ModelConfig, ParamIds};

pub use crate::autodiff::ParameterStore;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::temporal_graph::{Event, EventStream, NodeId};
use memory::RawMessage;

/// Tape handles for node memories during one batch.
///
/// Nodes updated at the start of the batch map to their GRU output; all other
/// nodes are recorded lazily as constants.
#[derive(Debug, Default)]
pub struct MemoryView {
    vars: HashMap<NodeId, Var>,
    embeddings: HashMap<(NodeId, u64), Var>,
    updated: Vec<NodeId>,
}

impl MemoryView {
    pub fn memory(&mut self, tape: &mut Tape, bank: &NodeMemoryBank, node: NodeId) -> Var {
        *self
            .vars
            .entry(node)
            .or_insert_with(|| tape.input(bank.memory(node)))
    }

    /// Nodes whose memory changed at the start of this batch, ascending.
    pub fn updated(&self) -> &[NodeId] {
        &self.updated
    }
}

/// `Phi(dt) = cos(freq * dt + phase)`.
pub fn time_encoding(tape: &mut Tape, model: &Model, dt: f64) -> Var {
    tape.time_encode(&model.store, model.ids.time_freq, model.ids.time_phase, dt)
}

fn raw_message_var(tape: &mut Tape, model: &Model, raw: &RawMessage) -> Var {
    let memories = tape.input(&raw.memories);
    let te = time_encoding(tape, model, raw.dt);
    let x = if raw.feat.is_empty() {
        tape.concat(&[memories, te])
    } else {
        let f = tape.input(&raw.feat);
        tape.concat(&[memories, te, f])
    };
    let h = tape.affine(&model.store, model.ids.msg_w, Some(model.ids.msg_b), x);
    tape.tanh(h)
}

/// One GRU step: `z`, `r` sigmoid gates, `n = tanh(Wn x + Un (r * h) + bn)`,
/// `h' = (1 - z) * n + z * h`.
pub fn gru_cell(tape: &mut Tape, model: &Model, x: Var, h: Var) -> Var {
    let (s, ids) = (&model.store, &model.ids);
    let gate = |tape: &mut Tape, w, u, b, hidden: Var| {
        let a = tape.affine(s, w, Some(b), x);
        let c = tape.affine(s, u, None, hidden);
        tape.add(a, c)
    };
    let z = gate(tape, ids.gru_wz, ids.gru_uz, ids.gru_bz, h);
    let z = tape.sigmoid(z);
    let r = gate(tape, ids.gru_wr, ids.gru_ur, ids.gru_br, h);
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h);
    let n = gate(tape, ids.gru_wn, ids.gru_un, ids.gru_bn, rh);
    let n = tape.tanh(n);
    let keep = tape.mul(z, h);
    let one_minus_z = tape.one_minus(z);
    let fresh = tape.mul(one_minus_z, n);
    tape.add(fresh, keep)
}

fn raw_messages(bank: &NodeMemoryBank, ev: &Event, feat: &[f64]) -> (RawMessage, RawMessage) {
    let build = |me: NodeId, peer: NodeId| {
        let mut memories = bank.memory(me).to_vec();
        memories.extend_from_slice(bank.memory(peer));
        RawMessage {
            t: ev.t,
            dt: ev.t - bank.last_update(me),
            memories,
            feat: feat.to_vec(),
        }
    };
    (build(ev.src, ev.dst), build(ev.dst, ev.src))
}

/// Messages an event would deliver to its source and destination, given the
/// bank's current state.
pub fn compute_message(model: &Model, bank: &NodeMemoryBank, ev: &Event, feat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = raw_messages(bank, ev, feat);
    let mut tape = Tape::new();
    let ma = raw_message_var(&mut tape, model, &a);
    let mb = raw_message_var(&mut tape, model, &b);
    (tape.value(ma).to_vec(), tape.value(mb).to_vec())
}

/// Folds an aggregated message into `node`'s memory at time `t`.
pub fn update_memory(model: &Model, bank: &mut NodeMemoryBank, node: NodeId, message: &[f64], t: f64) -> Result<()> {
    let last_update = bank.last_update(node);
    if t < last_update {
        return Err(Error::TimeTravel { node, t, last_update });
    }
    let mut tape = Tape::new();
    let x = tape.input(message);
    let h = tape.input(bank.memory(node));
    let h = gru_cell(&mut tape, model, x, h);
    bank.set_memory(node, tape.value(h), t);
    Ok(())
}

/// Delivers every pending message, recording the updates on `tape`, and
/// commits the new memories to the bank.
pub fn update_memories(model: &Model, bank: &mut NodeMemoryBank, tape: &mut Tape) -> Result<MemoryView> {
    let mut view = MemoryView::default();
    for (node, msgs) in bank.take_pending() {
        let last = msgs.last().expect("pending mailboxes are nonempty");
        let t = last.t;
        let last_update = bank.last_update(node);
        if t < last_update {
            return Err(Error::TimeTravel { node, t, last_update });
        }
        let agg = match model.cfg.aggregator {
            Aggregator::Last => raw_message_var(tape, model, last),
            Aggregator::Mean => {
                let parts: Vec<Var> = msgs.iter().map(|m| raw_message_var(tape, model, m)).collect();
                let total = tape.sum(&parts);
                tape.scale(total, 1.0 / parts.len() as f64)
            }
        };
        let h = tape.input(bank.memory(node));
        let h = gru_cell(tape, model, agg, h);
        bank.set_memory(node, tape.value(h), t);
        view.vars.insert(node, h);
        view.updated.push(node);
    }
    Ok(view)
}

/// Applies all pending messages outside any training tape.
pub fn flush(model: &Model, bank: &mut NodeMemoryBank) -> Result<()> {
    let mut tape = Tape::new();
    update_memories(model, bank, &mut tape).map(|_| ())
}

/// Dropout applied to the embedding-layer input.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Temporal embedding of `node` at time `t`:
/// `W [s_u ++ sum_v a_v (s_v ++ Phi(t - t_v) ++ f_v)] + b`, with `a` a softmax
/// over `attn . slot_v`. An empty neighbourhood contributes zeros.
pub fn embed<R: Rng>(
    model: &Model,
    bank: &NodeMemoryBank,
    view: &mut MemoryView,
    tape: &mut Tape,
    node: NodeId,
    t: f64,
    dropout: Option<&mut Dropout<'_, R>>,
) -> Var {
    let key = (node, t.to_bits());
    if let Some(&z) = view.embeddings.get(&key) {
        return z;
    }
    let own = view.memory(tape, bank, node);
    let entries = bank.neighbors(node);
    let neighborhood = if entries.is_empty() {
        tape.zeros(model.cfg.neighbor_dim())
    } else {
        let attn = tape.param(&model.store, model.ids.attn);
        let mut slots = Vec::with_capacity(entries.len());
        let mut scores = Vec::with_capacity(entries.len());
        for e in entries {
            let peer = view.memory(tape, bank, e.node);
            let te = time_encoding(tape, model, t - e.t);
            let slot = if e.feat.is_empty() {
                tape.concat(&[peer, te])
            } else {
                let f = tape.input(&e.feat);
                tape.concat(&[peer, te, f])
            };
            scores.push(tape.dot(attn, slot));
            slots.push(slot);
        }
        let scores = tape.concat(&scores);
        let weights = tape.softmax(scores);
        tape.weighted_sum(weights, &slots)
    };
    let mut x = tape.concat(&[own, neighborhood]);
    if let Some(d) = dropout {
        if d.rate > 0.0 {
            let keep = 1.0 - d.rate;
            let mask: Vec<f64> = (0..tape.dim(x))
                .map(|_| if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            x = tape.mask(x, &mask);
        }
    }
    let z = tape.affine(&model.store, model.ids.emb_w, Some(model.ids.emb_b), x);
    view.embeddings.insert(key, z);
    z
}

/// Forward-only embedding with the bank as it stands (pending messages are
/// not applied).
pub fn embed_value(model: &Model, bank: &NodeMemoryBank, node: NodeId, t: f64) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut view = MemoryView::default();
    let z = embed::<rand_chacha::ChaCha8Rng>(model, bank, &mut view, &mut tape, node, t, None);
    tape.value(z).to_vec()
}

/// Embeddings of one batch, aligned with its events.
#[derive(Debug)]
pub struct BatchEmbeddings {
    pub src: Vec<Var>,
    pub dst: Vec<Var>,
    /// Empty unless negatives were requested.
    pub neg: Vec<Var>,
    pub view: MemoryView,
}

fn check_order(bank: &NodeMemoryBank, events: &[Event]) -> Result<()> {
    if let Some(first) = events.first() {
        if first.t < bank.clock() {
            return Err(Error::OutOfOrder {
                start: first.t,
                clock: bank.clock(),
            });
        }
        if events.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::OutOfOrder {
                start: first.t,
                clock: bank.clock(),
            });
        }
    }
    Ok(())
}

/// Enqueues the batch's messages and appends it to the neighbour caches.
fn consume(bank: &mut NodeMemoryBank, stream: &EventStream, range: Range<usize>) {
    let start = range.start;
    let events = &stream.events()[range];
    let raws: Vec<(RawMessage, RawMessage)> = events
        .iter()
        .enumerate()
        .map(|(k, ev)| raw_messages(bank, ev, stream.feat(start + k)))
        .collect();
    for (ev, (a, b)) in events.iter().zip(raws) {
        bank.push_message(ev.src, a);
        bank.push_message(ev.dst, b);
    }
    for (k, ev) in events.iter().enumerate() {
        let feat = stream.feat(start + k);
        bank.push_neighbor(ev.src, NeighborEntry { node: ev.dst, t: ev.t, feat: feat.to_vec() });
        bank.push_neighbor(ev.dst, NeighborEntry { node: ev.src, t: ev.t, feat: feat.to_vec() });
    }
    if let Some(last) = events.last() {
        bank.set_clock(last.t);
    }
}

/// Checks ordering and folds messages left by earlier batches into memory.
/// Embed with the returned view, then call [`finish_batch`].
pub fn begin_batch(
    model: &Model,
    bank: &mut NodeMemoryBank,
    tape: &mut Tape,
    stream: &EventStream,
    range: Range<usize>,
) -> Result<MemoryView> {
    check_order(bank, &stream.events()[range])?;
    update_memories(model, bank, tape)
}

/// Enqueues the batch's messages and appends it to the neighbour caches.
pub fn finish_batch(bank: &mut NodeMemoryBank, stream: &EventStream, range: Range<usize>) {
    consume(bank, stream, range);
}

/// Processes one chronological batch:
/// 1. folds messages left by earlier batches into memory,
/// 2. embeds every source, destination and (optionally) negative at its
///    event time,
/// 3. enqueues this batch's messages,
/// 4. appends this batch to the neighbour caches.
///
/// Embeddings therefore never see the batch's own interactions.
#[allow(clippy::too_many_arguments)]
pub fn process_batch<R: Rng>(
    model: &Model,
    bank: &mut NodeMemoryBank,
    tape: &mut Tape,
    stream: &EventStream,
    range: Range<usize>,
    negatives: &[NodeId],
    mut dropout: Option<&mut Dropout<'_, R>>,
) -> Result<BatchEmbeddings> {
    let n = range.len();
    if !negatives.is_empty() && negatives.len() != n {
        return Err(Error::config(format!("{} negatives for a batch of {n} events", negatives.len())));
    }
    let mut view = begin_batch(model, bank, tape, stream, range.clone())?;
    let events = &stream.events()[range.clone()];
    let mut src = Vec::with_capacity(n);
    let mut dst = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(negatives.len());
    for (k, ev) in events.iter().enumerate() {
        src.push(embed(model, bank, &mut view, tape, ev.src, ev.t, dropout.as_deref_mut()));
        dst.push(embed(model, bank, &mut view, tape, ev.dst, ev.t, dropout.as_deref_mut()));
        if let Some(&u) = negatives.get(k) {
            neg.push(embed(model, bank, &mut view, tape, u, ev.t, dropout.as_deref_mut()));
        }
    }
    finish_batch(bank, stream, range);
    Ok(BatchEmbeddings { src, dst, neg, view })
}

/// Warm-up replay: memory updates and cache maintenance without embeddings.
pub fn advance(model: &Model, bank: &mut NodeMemoryBank, tape: &mut Tape, stream: &EventStream, range: Range<usize>) -> Result<()> {
    begin_batch(model, bank, tape, stream, range.clone())?;
    finish_batch(bank, stream, range);
    Ok(())
}
