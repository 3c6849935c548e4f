//! Seeded event generators for smoke runs and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::temporal_graph::{Event, EventStream, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub num_events: usize,
    /// Each node keeps this many preferred partners.
    pub partners: usize,
    /// Share of events that ignore the preferred partners.
    pub noise: f64,
    /// Attach a label to every event: whether the source has an even id,
    /// flipped with probability `noise`.
    pub labels: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 60,
            num_events: 2000,
            partners: 3,
            noise: 0.1,
            labels: false,
            seed: 0,
        }
    }
}

/// Repeated interactions with a few fixed partners per node, so recent
/// history predicts the next event.
pub fn structured_stream(cfg: &SyntheticConfig) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_nodes.max(2) as NodeId;
    let partners: Vec<Vec<NodeId>> = (0..n)
        .map(|u| {
            (0..cfg.partners.max(1))
                .map(|_| loop {
                    let v = rng.random_range(0..n);
                    if v != u {
                        break v;
                    }
                })
                .collect()
        })
        .collect();
    let mut t = 0.0;
    let mut events = Vec::with_capacity(cfg.num_events);
    for _ in 0..cfg.num_events {
        t += rng.random_range(0.5..1.5);
        let src = rng.random_range(0..n);
        let dst = if rng.random::<f64>() < cfg.noise {
            rng.random_range(0..n)
        } else {
            let p = &partners[src as usize];
            p[rng.random_range(0..p.len())]
        };
        let mut ev = Event::new(src, dst, t);
        if cfg.labels {
            ev.label = Some((src % 2 == 0) != (rng.random::<f64>() < cfg.noise));
        }
        events.push(ev);
    }
    EventStream::new(events, Vec::new(), 0, n as usize, true).expect("generated stream is valid")
}

/// Uniformly random pairs: nothing to learn.
pub fn uniform_stream(num_nodes: usize, num_events: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_nodes as NodeId;
    let mut t = 0.0;
    let events = (0..num_events)
        .map(|_| {
            t += rng.random_range(0.5..1.5);
            Event::new(rng.random_range(0..n), rng.random_range(0..n), t)
        })
        .collect();
    EventStream::new(events, Vec::new(), 0, num_nodes, true).expect("generated stream is valid")
}
