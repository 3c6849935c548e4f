//! Top-k retention of events by temporal edge centrality.

use crate::centrality::{edge_centrality, node_centrality, Measure, ScoredEdgeSet};
use crate::error::{Error, Result};
use crate::temporal_graph::EventStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig {
    /// Fraction of events removed, in `[0, 1)`.
    pub c: f64,
    pub measure: Measure,
    pub alpha: f64,
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::config(format!("prune ratio c={} must lie in [0, 1)", self.c)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha must be finite"));
        }
        Ok(())
    }

    /// `ceil(E * (1 - c))`, at least one event for a nonempty stream.
    pub fn retained(&self, num_events: usize) -> usize {
        let k = (num_events as f64 * (1.0 - self.c) - 1e-9).ceil().max(0.0) as usize;
        k.clamp(num_events.min(1), num_events)
    }
}

#[derive(Clone, Debug)]
pub struct Pruned {
    pub stream: EventStream,
    /// Scores aligned with `stream`.
    pub scored: ScoredEdgeSet,
    /// Positions of the retained events in the input stream.
    pub kept: Vec<usize>,
}

/// Keeps the `k` highest-scoring events in chronological order.
///
/// Ties on the score are broken towards later events, then smaller source
/// id, then smaller destination id.
pub fn prune(stream: &EventStream, scored: &ScoredEdgeSet, cfg: &PruneConfig) -> Result<Pruned> {
    cfg.validate()?;
    if scored.len() != stream.len() {
        return Err(Error::config(format!(
            "{} scores for {} events",
            scored.len(),
            stream.len()
        )));
    }
    let k = cfg.retained(stream.len());
    let events = stream.events();
    let mut order: Vec<usize> = (0..stream.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&events[a], &events[b]);
        scored.phi[b]
            .total_cmp(&scored.phi[a])
            .then_with(|| eb.t.total_cmp(&ea.t))
            .then_with(|| ea.src.cmp(&eb.src))
            .then_with(|| ea.dst.cmp(&eb.dst))
            .then_with(|| a.cmp(&b))
    });
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    Ok(Pruned {
        stream: stream.select(&kept),
        scored: scored.select(&kept),
        kept,
    })
}

/// Scores `stream` with the configured centrality and prunes it.
pub fn prune_by_centrality(stream: &EventStream, cfg: &PruneConfig) -> Result<Pruned> {
    cfg.validate()?;
    let table = node_centrality(stream, cfg.measure)?;
    let scored = edge_centrality(stream, &table, cfg.alpha, stream.directed());
    prune(stream, &scored, cfg)
}
