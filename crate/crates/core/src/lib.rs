//! Temporal graph contrastive learning: centrality-guided pruning, adaptive
//! edge-drop augmentation, a memory-based temporal encoder and a joint
//! link-prediction + two-view contrastive objective.

pub mod augmentation;
pub mod autodiff;
pub mod centrality;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod pruning;
pub mod temporal_graph;

pub use error::{Error, Result};
