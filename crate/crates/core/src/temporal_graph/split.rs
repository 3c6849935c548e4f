use std::collections::BTreeSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EventStream, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    /// Positional boundaries `(train_end, val_end)` for a stream of `len` events.
    pub fn boundaries(&self, len: usize) -> (usize, usize) {
        // the epsilon absorbs representation error, e.g. 0.7 + 0.15 < 0.85
        let cut = |frac: f64| ((frac * len as f64) + 1e-9).floor() as usize;
        (cut(self.train).min(len), cut(self.train + self.val).min(len))
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split ratios {:?} must be in [0,1] and sum to 1",
                parts
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: EventStream,
    pub val: EventStream,
    pub test: EventStream,
    /// Held out of training entirely; scored by inductive evaluation.
    pub inductive_nodes: BTreeSet<NodeId>,
    /// Train events discarded because they touched an inductive node.
    pub removed_train_events: usize,
}

impl Split {
    /// Train, then val, then test, as one stream.
    pub fn full_stream(&self) -> EventStream {
        self.train
            .concat(&self.val)
            .and_then(|s| s.concat(&self.test))
            .expect("split segments are chronological by construction")
    }
}

/// Positional 70/15/15-style split with an optional inductive hold-out.
///
/// Inductive nodes are drawn first from nodes that only occur in val/test;
/// if those do not reach `inductive_frac` of the val/test node set, further
/// val/test nodes are sampled and their train events are dropped.
pub fn chronological_split(
    stream: &EventStream,
    ratios: SplitRatios,
    inductive_frac: f64,
    seed: u64,
) -> Result<Split> {
    ratios.validate()?;
    if !(0.0..1.0).contains(&inductive_frac) {
        return Err(Error::config(format!(
            "inductive fraction {inductive_frac} must lie in [0, 1)"
        )));
    }
    let len = stream.len();
    let (train_end, val_end) = ratios.boundaries(len);
    let train = stream.slice(0..train_end);
    let val = stream.slice(train_end..val_end);
    let test = stream.slice(val_end..len);

    let in_train: BTreeSet<NodeId> = train.active_nodes().into_iter().collect();
    let pool: BTreeSet<NodeId> = val.active_nodes().into_iter().chain(test.active_nodes()).collect();
    let wanted = (inductive_frac * pool.len() as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fresh: Vec<NodeId> = pool.iter().copied().filter(|u| !in_train.contains(u)).collect();
    let mut seen: Vec<NodeId> = pool.iter().copied().filter(|u| in_train.contains(u)).collect();
    fresh.shuffle(&mut rng);
    seen.shuffle(&mut rng);

    let mut inductive_nodes: BTreeSet<NodeId> = fresh.iter().copied().take(wanted).collect();
    let shortfall = wanted.saturating_sub(inductive_nodes.len());
    inductive_nodes.extend(seen.iter().copied().take(shortfall));

    let train = if shortfall > 0 {
        train.filter(|_, e| !inductive_nodes.contains(&e.src) && !inductive_nodes.contains(&e.dst))
    } else {
        train
    };
    let removed_train_events = train_end - train.len();

    for (name, seg) in [("train", &train), ("val", &val), ("test", &test)] {
        if seg.is_empty() {
            return Err(Error::EmptySegment(name));
        }
    }
    Ok(Split {
        train,
        val,
        test,
        inductive_nodes,
        removed_train_events,
    })
}

/// Divisor applied to every timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeScale {
    pub divisor: f64,
    /// Set when the train span was zero and every timestamp collapsed to 0.
    pub degenerate: bool,
}

impl TimeScale {
    pub fn normalize(&self, t: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            t / self.divisor
        }
    }

    pub fn denormalize(&self, t: f64) -> f64 {
        t * self.divisor
    }
}

/// Rescales time so the first `train_len` events span `[0, 1]`.
pub fn normalize_time(stream: &EventStream, train_len: usize) -> Result<(EventStream, TimeScale)> {
    if stream.is_empty() {
        return Err(Error::NoEvents);
    }
    let train_len = train_len.clamp(1, stream.len());
    let max_train = stream.event(train_len - 1).t;
    let scale = if max_train > 0.0 {
        TimeScale {
            divisor: max_train,
            degenerate: false,
        }
    } else {
        warn!("train segment spans zero time; all timestamps set to 0");
        TimeScale {
            divisor: 1.0,
            degenerate: true,
        }
    };
    Ok((stream.map_times(|t| scale.normalize(t)), scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal_graph::Event;
    use proptest::prelude::*;

    fn uniform(n_events: usize, n_nodes: u32, seed: u64) -> EventStream {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        let events = (0..n_events)
            .map(|_| {
                if rng.random_bool(0.7) {
                    t += rng.random_range(0.0..3.0f64).floor();
                }
                Event::new(rng.random_range(0..n_nodes), rng.random_range(0..n_nodes), t)
            })
            .collect();
        EventStream::new(events, vec![], 0, n_nodes as usize, true).unwrap()
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let s = uniform(100, 10, 1);
        let sp = chronological_split(&s, SplitRatios::default(), 0.0, 0).unwrap();
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (70, 15, 15));
        assert!(sp.inductive_nodes.is_empty());
        assert_eq!(sp.train, s.slice(0..70));
    }

    #[test]
    fn ties_across_boundary_keep_monotone_segments() {
        // 20 events, timestamps in blocks of four so ties straddle index 14 and 17
        let events = (0..20).map(|i| Event::new(i % 3, (i + 1) % 3, (i / 4) as f64)).collect();
        let s = EventStream::new(events, vec![], 0, 3, true).unwrap();
        let sp = chronological_split(&s, SplitRatios::default(), 0.0, 0).unwrap();
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (14, 3, 3));
        assert!(sp.train.max_time().unwrap() <= sp.val.events()[0].t);
        assert!(sp.val.max_time().unwrap() <= sp.test.events()[0].t);
        assert_eq!(sp.train.max_time(), Some(3.0));
        assert_eq!(sp.val.events()[0].t, 3.0);
    }

    #[test]
    fn bad_ratios_and_empty_segments() {
        let s = uniform(100, 10, 2);
        let r = SplitRatios { train: 0.5, val: 0.2, test: 0.2 };
        assert!(matches!(chronological_split(&s, r, 0.0, 0), Err(Error::Config(_))));
        assert!(chronological_split(&s, SplitRatios::default(), 1.0, 0).is_err());
        let tiny = uniform(3, 3, 2);
        assert!(matches!(
            chronological_split(&tiny, SplitRatios::default(), 0.0, 0),
            Err(Error::EmptySegment(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let events = (0..3).map(|i| Event::new(0, 1, 2.0 * i as f64)).collect();
        let s = EventStream::new(events, vec![], 0, 2, true).unwrap();
        let (n, scale) = normalize_time(&s, 3).unwrap();
        let ts: Vec<f64> = n.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0.0, 0.5, 1.0]);
        assert_eq!(scale.divisor, 4.0);

        let one = EventStream::new(vec![Event::new(0, 1, 0.0)], vec![], 0, 2, true).unwrap();
        let (n, scale) = normalize_time(&one, 1).unwrap();
        assert!(scale.degenerate);
        assert_eq!(n.events()[0].t, 0.0);
    }

    proptest! {
        #[test]
        fn split_segments_are_ordered_and_inductive_nodes_unseen(
            seed in 0u64..10_000, n in 20usize..200, frac in 0.0f64..0.5
        ) {
            let s = uniform(n, 15, seed);
            let sp = chronological_split(&s, SplitRatios::default(), frac, seed).unwrap();
            prop_assert!(sp.train.max_time().unwrap() <= sp.val.events()[0].t);
            prop_assert!(sp.val.max_time().unwrap() <= sp.test.events()[0].t);
            let (a, b) = SplitRatios::default().boundaries(n);
            prop_assert_eq!(sp.val.len(), b - a);
            prop_assert_eq!(sp.train.len() + sp.removed_train_events, a);
            for e in sp.train.events() {
                prop_assert!(!sp.inductive_nodes.contains(&e.src));
                prop_assert!(!sp.inductive_nodes.contains(&e.dst));
            }
        }

        #[test]
        fn normalization_round_trips(seed in 0u64..10_000, n in 2usize..100) {
            let s = uniform(n, 8, seed).map_times(|t| t * 1.37e6 + 0.5);
            let (norm, scale) = normalize_time(&s, n * 7 / 10).unwrap();
            prop_assume!(!scale.degenerate);
            for (a, b) in s.events().iter().zip(norm.events()) {
                prop_assert!((scale.denormalize(b.t) - a.t).abs() <= 1e-12 * a.t.abs().max(1.0));
            }
        }
    }
}
