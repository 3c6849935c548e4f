//! Importance-aware edge dropping for the two contrastive views.
//!
//! Low-weight events are dropped more eagerly than high-weight ones. Draws
//! come from ChaCha8 keyed by `(seed, step)`: the stream id is the training
//! step and the i-th draw belongs to the i-th event, so a view is a pure
//! function of its inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::temporal_graph::EventStream;

/// Largest admissible drop probability.
pub const MAX_CUTOFF: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_e1: f64,
    pub p_e2: f64,
    pub p_r: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_e1: 0.4,
            p_e2: 0.4,
            p_r: MAX_CUTOFF,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=self.p_r).contains(&p);
        if !(0.0..=MAX_CUTOFF).contains(&self.p_r) {
            return Err(Error::config(format!("p_r={} must lie in [0, {MAX_CUTOFF}]", self.p_r)));
        }
        if !ok(self.p_e1) || !ok(self.p_e2) {
            return Err(Error::config(format!(
                "p_e1={} and p_e2={} must lie in [0, p_r={}]",
                self.p_e1, self.p_e2, self.p_r
            )));
        }
        Ok(())
    }

    /// Drop scale for view 1 or 2.
    pub fn p_e(&self, view: View) -> f64 {
        match view {
            View::First => self.p_e1,
            View::Second => self.p_e2,
        }
    }

    /// Independent sub-seed per view.
    pub fn view_seed(&self, view: View) -> u64 {
        let salt: u64 = match view {
            View::First => 0x9E37_79B9_7F4A_7C15,
            View::Second => 0xC2B2_AE3D_27D4_EB4F,
        };
        self.seed.rotate_left(17) ^ salt
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum View {
    First,
    Second,
}

impl View {
    pub const BOTH: [View; 2] = [View::First, View::Second];

    pub fn index(self) -> usize {
        match self {
            View::First => 0,
            View::Second => 1,
        }
    }
}

/// `p = min((w_max - w) / (w_max - mean_w) * p_e, p_r)`; all zero when the
/// weights carry no spread.
pub fn removal_probabilities(weights: &[f64], p_e: f64, p_r: f64) -> Vec<f64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let w_max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let spread = w_max - mean;
    if spread < 1e-12 {
        return vec![0.0; weights.len()];
    }
    weights
        .iter()
        .map(|w| ((w_max - w) / spread * p_e).min(p_r))
        .collect()
}

/// Keep-mask for one view: event `i` survives with probability `1 - probs[i]`.
pub fn sample_mask(probs: &[f64], seed: u64, step: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    probs.iter().map(|&p| rng.random::<f64>() >= p).collect()
}

pub fn sample_view(stream: &EventStream, probs: &[f64], seed: u64, step: u64) -> Result<EventStream> {
    if probs.len() != stream.len() {
        return Err(Error::config(format!(
            "{} probabilities for {} events",
            probs.len(),
            stream.len()
        )));
    }
    let mask = sample_mask(probs, seed, step);
    Ok(stream.filter(|i, _| mask[i]))
}
