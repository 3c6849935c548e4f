//! Node centrality on the static projection of a stream, and the
//! time-weighted edge centrality built on top of it.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal_graph::{EventStream, NodeId};

/// Floor applied to edge centrality before taking its logarithm.
pub const PHI_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[serde(rename = "de")]
    Degree,
    #[serde(rename = "ev")]
    Eigenvector,
    #[serde(rename = "pr")]
    PageRank,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Degree => "de",
            Measure::Eigenvector => "ev",
            Measure::PageRank => "pr",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "de" | "degree" => Ok(Measure::Degree),
            "ev" | "eigenvector" => Ok(Measure::Eigenvector),
            "pr" | "pagerank" => Ok(Measure::PageRank),
            other => Err(Error::config(format!("unknown centrality measure `{other}` (de, ev, pr)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralityTable {
    pub measure: Measure,
    pub scores: Vec<f64>,
}

impl CentralityTable {
    pub fn score(&self, node: NodeId) -> f64 {
        self.scores[node as usize]
    }

    /// `node_id,score` rows keyed by the stream's raw ids.
    pub fn write_csv(&self, stream: &EventStream, mut out: impl Write) -> Result<()> {
        writeln!(out, "node_id,score")?;
        for (u, s) in self.scores.iter().enumerate() {
            writeln!(out, "{},{s:?}", stream.raw_id(u as NodeId))?;
        }
        Ok(())
    }
}

/// Per-event temporal edge centrality and its log-normalized weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredEdgeSet {
    pub phi: Vec<f64>,
    pub weight: Vec<f64>,
}

impl ScoredEdgeSet {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        ScoredEdgeSet {
            phi: indices.iter().map(|&i| self.phi[i]).collect(),
            weight: indices.iter().map(|&i| self.weight[i]).collect(),
        }
    }
}

pub fn node_centrality(stream: &EventStream, measure: Measure) -> Result<CentralityTable> {
    match measure {
        Measure::Degree => degree_centrality(stream),
        Measure::Eigenvector => eigenvector_centrality(stream, 1e-8, 1000),
        Measure::PageRank => pagerank_centrality(stream, 0.85, 1e-10),
    }
}

/// In-neighbour lists of the static projection (both directions when undirected).
fn in_adjacency(stream: &EventStream) -> Vec<Vec<NodeId>> {
    let mut adj = vec![Vec::new(); stream.num_nodes()];
    for (u, v) in stream.static_edges() {
        adj[v as usize].push(u);
        if !stream.directed() {
            adj[u as usize].push(v);
        }
    }
    adj
}

/// Distinct neighbours (in or out) divided by `n - 1`.
pub fn degree_centrality(stream: &EventStream) -> Result<CentralityTable> {
    if stream.is_empty() {
        return Err(Error::NoEvents);
    }
    let n = stream.num_nodes();
    let mut neighbours = vec![Vec::<NodeId>::new(); n];
    for (u, v) in stream.static_edges() {
        neighbours[u as usize].push(v);
        neighbours[v as usize].push(u);
    }
    let denom = n.saturating_sub(1).max(1) as f64;
    let scores = neighbours
        .into_iter()
        .map(|mut nb| {
            nb.sort_unstable();
            nb.dedup();
            nb.len() as f64 / denom
        })
        .collect();
    Ok(CentralityTable {
        measure: Measure::Degree,
        scores,
    })
}

/// Principal eigenvector of the binary adjacency matrix (transposed for
/// directed streams, so a node is central when central nodes point to it).
///
/// Iterates `x <- (A + I)^T x` with unit L2 normalisation; the identity shift
/// leaves eigenvectors unchanged and breaks the period-2 oscillation of
/// bipartite graphs.
pub fn eigenvector_centrality(stream: &EventStream, tol: f64, max_iter: usize) -> Result<CentralityTable> {
    let n = stream.num_nodes();
    let adj = in_adjacency(stream);
    if adj.iter().all(Vec::is_empty) {
        return Err(Error::config("eigenvector centrality needs at least one edge"));
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for (v, ins) in adj.iter().enumerate() {
            next[v] = x[v] + ins.iter().map(|&u| x[u as usize]).sum::<f64>();
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        next.iter_mut().for_each(|a| *a /= norm);
        residual = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut x, &mut next);
        if residual < tol {
            return Ok(CentralityTable {
                measure: Measure::Eigenvector,
                scores: x,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// PageRank with uniform teleport and uniform redistribution of dangling mass.
pub fn pagerank_centrality(stream: &EventStream, damping: f64, tol: f64) -> Result<CentralityTable> {
    if stream.num_nodes() == 0 {
        return Err(Error::NoEvents);
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::config(format!("damping {damping} must lie in [0, 1)")));
    }
    let n = stream.num_nodes();
    let adj = in_adjacency(stream);
    let mut out_deg = vec![0usize; n];
    for ins in &adj {
        for &u in ins {
            out_deg[u as usize] += 1;
        }
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    // damping < 1 contracts in L1 by `damping` per step
    let max_iter = 100_000;
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&u| out_deg[u] == 0).map(|u| x[u]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for (v, ins) in adj.iter().enumerate() {
            next[v] = base
                + damping
                    * ins
                        .iter()
                        .map(|&u| x[u as usize] / out_deg[u as usize] as f64)
                        .sum::<f64>();
        }
        let change: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            break;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|a| *a /= total);
    Ok(CentralityTable {
        measure: Measure::PageRank,
        scores: x,
    })
}

/// `phi = (c(u) + c(v)) / 2 + alpha * t` for undirected streams and
/// `phi = c(v) + alpha * t` for directed ones, floored at [`PHI_FLOOR`];
/// `weight = log10(phi)`.
pub fn edge_centrality(stream: &EventStream, table: &CentralityTable, alpha: f64, directed: bool) -> ScoredEdgeSet {
    let phi: Vec<f64> = stream
        .events()
        .iter()
        .map(|e| {
            let node_term = if directed {
                table.score(e.dst)
            } else {
                (table.score(e.src) + table.score(e.dst)) / 2.0
            };
            (node_term + alpha * e.t).max(PHI_FLOOR)
        })
        .collect();
    let weight = phi.iter().map(|p| p.log10()).collect();
    ScoredEdgeSet { phi, weight }
}
