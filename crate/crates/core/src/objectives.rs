//! Link-prediction loss, projection head, two-view contrastive loss and their
//! weighted sum.

use crate::autodiff::{log_sigmoid, Tape, Var};
use crate::encoder::Model;

/// Negative-sampling loss with dot-product scores:
/// `-ln s(z_u . z_v) - sum_k ln s(-z_u . z_k)`.
pub fn task_loss(z_u: &[f64], z_v: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    -log_sigmoid(dot(z_u, z_v)) - negatives.iter().map(|n| log_sigmoid(-dot(z_u, n))).sum::<f64>()
}

/// Link decoder `W2 relu(W1 [z_u ++ z_v] + b1) + b2`, a scalar logit.
pub fn link_logit(tape: &mut Tape, model: &Model, z_u: Var, z_v: Var) -> Var {
    let (s, ids) = (&model.store, &model.ids);
    let x = tape.concat(&[z_u, z_v]);
    let h = tape.affine(s, ids.link_w1, Some(ids.link_b1), x);
    let h = tape.relu(h);
    tape.affine(s, ids.link_w2, Some(ids.link_b2), h)
}

/// Mean over pairs of `-ln s(pos) - ln s(-neg)`.
pub fn link_loss(tape: &mut Tape, positives: &[Var], negatives: &[Var]) -> Option<Var> {
    assert_eq!(positives.len(), negatives.len());
    if positives.is_empty() {
        return None;
    }
    let mut terms = Vec::with_capacity(2 * positives.len());
    for (&p, &n) in positives.iter().zip(negatives) {
        terms.push(tape.log_sigmoid(p));
        let flipped = tape.scale(n, -1.0);
        terms.push(tape.log_sigmoid(flipped));
    }
    let total = tape.sum(&terms);
    Some(tape.scale(total, -1.0 / positives.len() as f64))
}

/// Projection head `g(z) = W2 elu(W1 z + b1) + b2`.
pub fn project(tape: &mut Tape, model: &Model, z: Var) -> Var {
    let (s, ids) = (&model.store, &model.ids);
    let h = tape.affine(s, ids.proj_w1, Some(ids.proj_b1), z);
    let h = tape.elu(h);
    tape.affine(s, ids.proj_w2, Some(ids.proj_b2), h)
}

/// Row `i` of `first` and `second` embed the same node in the two views.
#[derive(Clone, Debug)]
pub struct ContrastBatch {
    pub first: Vec<Var>,
    pub second: Vec<Var>,
    pub tau: f64,
}

/// InfoNCE over projected embeddings with cosine similarity and both inter-
/// and intra-view negatives. `None` when fewer than two pairs are available.
pub fn contrastive_loss(tape: &mut Tape, model: &Model, batch: &ContrastBatch) -> Option<Var> {
    assert_eq!(batch.first.len(), batch.second.len());
    if batch.first.len() < 2 {
        return None;
    }
    let first: Vec<Var> = batch.first.iter().map(|&z| project(tape, model, z)).collect();
    let second: Vec<Var> = batch.second.iter().map(|&z| project(tape, model, z)).collect();
    Some(tape.info_nce(&first, &second, batch.tau))
}

/// Contrastive loss of already-projected rows.
pub fn contrastive_loss_value(first: &[Vec<f64>], second: &[Vec<f64>], tau: f64) -> Option<f64> {
    if first.len() < 2 || first.len() != second.len() {
        return None;
    }
    let mut tape = Tape::new();
    let a: Vec<Var> = first.iter().map(|r| tape.input(r)).collect();
    let b: Vec<Var> = second.iter().map(|r| tape.input(r)).collect();
    let l = tape.info_nce(&a, &b, tau);
    Some(tape.scalar(l))
}

/// `lambda * task + cl`.
pub fn total_loss_value(task: f64, cl: f64, lambda: f64) -> f64 {
    lambda * task + cl
}

/// Tape form of [`total_loss_value`]; missing terms count as zero.
pub fn total_loss(tape: &mut Tape, task: Option<Var>, cl: Option<Var>, lambda: f64) -> Option<Var> {
    let task = task.map(|t| tape.scale(t, lambda));
    match (task, cl) {
        (Some(t), Some(c)) => Some(tape.add(t, c)),
        (t, c) => t.or(c),
    }
}
