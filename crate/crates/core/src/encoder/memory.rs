use std::collections::VecDeque;

use super::model::{Aggregator, ModelConfig};
use crate::temporal_graph::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborEntry {
    pub node: NodeId,
    pub t: f64,
    pub feat: Vec<f64>,
}

/// Message inputs captured when an event is consumed, decoded into a message
/// vector only when the owning node's memory is next updated.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RawMessage {
    pub t: f64,
    pub dt: f64,
    /// Own memory followed by the peer's memory, both as of the event.
    pub memories: Vec<f64>,
    pub feat: Vec<f64>,
}

/// Per-node memory, last-update time, recent-neighbour ring buffer and the
/// mailbox of messages not yet folded into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeMemoryBank {
    d_mem: usize,
    capacity: usize,
    aggregator: Aggregator,
    mem: Vec<f64>,
    last_update: Vec<f64>,
    neighbors: Vec<VecDeque<NeighborEntry>>,
    pub(crate) pending: Vec<Vec<RawMessage>>,
    pub(crate) pending_nodes: Vec<NodeId>,
    clock: f64,
}

impl NodeMemoryBank {
    pub fn new(num_nodes: usize, cfg: &ModelConfig) -> Self {
        NodeMemoryBank {
            d_mem: cfg.d_mem,
            capacity: cfg.n_neighbors,
            aggregator: cfg.aggregator,
            mem: vec![0.0; num_nodes * cfg.d_mem],
            last_update: vec![0.0; num_nodes],
            neighbors: vec![VecDeque::new(); num_nodes],
            pending: vec![Vec::new(); num_nodes],
            pending_nodes: Vec::new(),
            clock: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.mem.iter_mut().for_each(|m| *m = 0.0);
        self.last_update.iter_mut().for_each(|t| *t = 0.0);
        self.neighbors.iter_mut().for_each(VecDeque::clear);
        self.pending.iter_mut().for_each(Vec::clear);
        self.pending_nodes.clear();
        self.clock = 0.0;
    }

    pub fn num_nodes(&self) -> usize {
        self.last_update.len()
    }

    pub fn memory(&self, node: NodeId) -> &[f64] {
        let u = node as usize;
        &self.mem[u * self.d_mem..(u + 1) * self.d_mem]
    }

    pub(crate) fn set_memory(&mut self, node: NodeId, value: &[f64], t: f64) {
        let u = node as usize;
        self.mem[u * self.d_mem..(u + 1) * self.d_mem].copy_from_slice(value);
        self.last_update[u] = t;
    }

    pub fn last_update(&self, node: NodeId) -> f64 {
        self.last_update[node as usize]
    }

    /// Cached neighbours, oldest first.
    pub fn neighbors(&self, node: NodeId) -> &VecDeque<NeighborEntry> {
        &self.neighbors[node as usize]
    }

    /// Timestamp of the latest event consumed.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub(crate) fn set_clock(&mut self, t: f64) {
        self.clock = self.clock.max(t);
    }

    pub fn pending_count(&self, node: NodeId) -> usize {
        self.pending[node as usize].len()
    }

    pub fn has_pending(&self) -> bool {
        !self.pending_nodes.is_empty()
    }

    pub(crate) fn push_message(&mut self, node: NodeId, msg: RawMessage) {
        let slot = &mut self.pending[node as usize];
        if slot.is_empty() {
            self.pending_nodes.push(node);
        }
        if self.aggregator == Aggregator::Last {
            slot.clear();
        }
        slot.push(msg);
    }

    pub(crate) fn push_neighbor(&mut self, node: NodeId, entry: NeighborEntry) {
        if self.capacity == 0 {
            return;
        }
        let ring = &mut self.neighbors[node as usize];
        if ring.len() == self.capacity {
            ring.pop_front();
        }
        ring.push_back(entry);
    }

    /// Nodes with pending messages, ascending, and their mailboxes emptied.
    pub(crate) fn take_pending(&mut self) -> Vec<(NodeId, Vec<RawMessage>)> {
        let mut nodes = std::mem::take(&mut self.pending_nodes);
        nodes.sort_unstable();
        nodes
            .into_iter()
            .map(|u| (u, std::mem::take(&mut self.pending[u as usize])))
            .collect()
    }
}
