//! Continuous-time temporal graphs as chronologically ordered event streams.
//!
//! An [`EventStream`] is immutable once built. Every derived stream (a split
//! segment, a pruned stream, a sampled view) keeps the parent's node count and
//! raw-id map so node ids stay comparable across all of them.

mod cache;
mod ingest;
mod split;

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

pub use cache::{read_cache, read_cache_file, write_cache, write_cache_file, CACHE_MAGIC};
pub use ingest::{ingest_csv, parse_csv, write_csv, write_csv_file, IngestOptions, Ingested, LabelColumn};
pub use split::{chronological_split, normalize_time, Split, SplitRatios, TimeScale};

/// Dense node index, `0..num_nodes`.
pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: f64,
    pub label: Option<bool>,
}

impl Event {
    pub fn new(src: NodeId, dst: NodeId, t: f64) -> Self {
        Event {
            src,
            dst,
            t,
            label: None,
        }
    }
}

/// Identifier a node carried in the source file.
///
/// Bipartite inputs (user/item files) keep the two id spaces apart through
/// the `item` flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawNode {
    pub id: u64,
    pub item: bool,
}

impl fmt::Display for RawNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.item {
            write!(f, "item:{}", self.id)
        } else {
            write!(f, "{}", self.id)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    /// Row-major, `feat_dim` values per event.
    features: Vec<f64>,
    feat_dim: usize,
    num_nodes: usize,
    directed: bool,
    raw_ids: Vec<RawNode>,
}

impl EventStream {
    /// Builds a stream with identity raw ids, validating every invariant.
    pub fn new(
        events: Vec<Event>,
        features: Vec<f64>,
        feat_dim: usize,
        num_nodes: usize,
        directed: bool,
    ) -> Result<Self> {
        let raw_ids = (0..num_nodes as u64)
            .map(|id| RawNode { id, item: false })
            .collect();
        Self::with_raw_ids(events, features, feat_dim, directed, raw_ids)
    }

    pub fn with_raw_ids(
        events: Vec<Event>,
        features: Vec<f64>,
        feat_dim: usize,
        directed: bool,
        raw_ids: Vec<RawNode>,
    ) -> Result<Self> {
        let num_nodes = raw_ids.len();
        if features.len() != events.len() * feat_dim {
            return Err(Error::config(format!(
                "feature buffer holds {} values, expected {} events x {} dims",
                features.len(),
                events.len(),
                feat_dim
            )));
        }
        let mut prev = 0.0f64;
        for (i, ev) in events.iter().enumerate() {
            if !(ev.t.is_finite() && ev.t >= 0.0) {
                return Err(Error::config(format!("event {i} has invalid timestamp {}", ev.t)));
            }
            if ev.t < prev {
                return Err(Error::config(format!("event {i} breaks chronological order")));
            }
            prev = ev.t;
            if ev.src as usize >= num_nodes || ev.dst as usize >= num_nodes {
                return Err(Error::config(format!(
                    "event {i} references node outside 0..{num_nodes}"
                )));
            }
        }
        Ok(EventStream {
            events,
            features,
            feat_dim,
            num_nodes,
            directed,
            raw_ids,
        })
    }

    /// Same node universe and metadata, no events.
    pub fn empty_like(&self) -> Self {
        EventStream {
            events: Vec::new(),
            features: Vec::new(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        EventStream {
            events: Vec::new(),
            features: Vec::new(),
            feat_dim: self.feat_dim,
            num_nodes: self.num_nodes,
            directed: self.directed,
            raw_ids: self.raw_ids.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, i: usize) -> &Event {
        &self.events[i]
    }

    pub fn feat(&self, i: usize) -> &[f64] {
        &self.features[i * self.feat_dim..(i + 1) * self.feat_dim]
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn raw_ids(&self) -> &[RawNode] {
        &self.raw_ids
    }

    pub fn raw_id(&self, node: NodeId) -> RawNode {
        self.raw_ids[node as usize]
    }

    pub fn has_labels(&self) -> bool {
        !self.events.is_empty() && self.events.iter().all(|e| e.label.is_some())
    }

    pub fn max_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.t)
    }

    pub fn with_directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }

    /// Subsequence at the given (increasing) positions.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = self.clone_meta();
        out.events.reserve(indices.len());
        out.features.reserve(indices.len() * self.feat_dim);
        for &i in indices {
            out.events.push(self.events[i]);
            out.features.extend_from_slice(self.feat(i));
        }
        out
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let mut out = self.clone_meta();
        out.features = self.features[range.start * self.feat_dim..range.end * self.feat_dim].to_vec();
        out.events = self.events[range].to_vec();
        out
    }

    /// Keeps events for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Event) -> bool) -> Self {
        let indices: Vec<usize> = (0..self.len()).filter(|&i| keep(i, &self.events[i])).collect();
        self.select(&indices)
    }

    /// Applies a nondecreasing time map.
    pub fn map_times(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for ev in &mut out.events {
            ev.t = f(ev.t);
        }
        out
    }

    /// Appends `other`, which must share this stream's node universe and start
    /// no earlier than this stream ends.
    pub fn concat(&self, other: &EventStream) -> Result<Self> {
        if other.num_nodes != self.num_nodes || other.feat_dim != self.feat_dim {
            return Err(Error::config("cannot concatenate streams over different node universes"));
        }
        if let (Some(a), Some(b)) = (self.max_time(), other.events.first()) {
            if b.t < a {
                return Err(Error::config("concatenated stream would break chronological order"));
            }
        }
        let mut out = self.clone();
        out.events.extend_from_slice(&other.events);
        out.features.extend_from_slice(&other.features);
        Ok(out)
    }

    /// Distinct node pairs of the static projection, with `u < v` for
    /// undirected streams. Self-loops are dropped.
    pub fn static_edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut pairs: Vec<(NodeId, NodeId)> = self
            .events
            .iter()
            .filter(|e| e.src != e.dst)
            .map(|e| {
                if self.directed || e.src < e.dst {
                    (e.src, e.dst)
                } else {
                    (e.dst, e.src)
                }
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Every node id touched by at least one event, ascending.
    pub fn active_nodes(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.num_nodes];
        for e in &self.events {
            seen[e.src as usize] = true;
            seen[e.dst as usize] = true;
        }
        (0..self.num_nodes as NodeId).filter(|&u| seen[u as usize]).collect()
    }

    /// Distinct destination ids, ascending.
    pub fn destinations(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.num_nodes];
        for e in &self.events {
            seen[e.dst as usize] = true;
        }
        (0..self.num_nodes as NodeId).filter(|&u| seen[u as usize]).collect()
    }
}

/// Splits a chronological stream into consecutive batches of roughly
/// `batch_size` events. A batch is extended past `batch_size` until the
/// timestamp changes, so events sharing a timestamp never straddle a batch
/// boundary.
pub fn chronological_batches(events: &[Event], batch_size: usize) -> Vec<Range<usize>> {
    let batch_size = batch_size.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < events.len() {
        let mut end = (start + batch_size).min(events.len());
        while end < events.len() && events[end].t == events[end - 1].t {
            end += 1;
        }
        out.push(start..end);
        start = end;
    }
    out
}
