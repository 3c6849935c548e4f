use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::metrics::{auc, ClassMetrics};
use super::optim::Adam;
use crate::autodiff::{Tape, Var};
use crate::encoder::{self, Model, NodeMemoryBank};
use crate::error::{Error, Result};
use crate::temporal_graph::{chronological_batches, Split};

/// Source-node embedding at the time of every labelled event.
#[derive(Clone, Debug, Default)]
pub struct LabelledEmbeddings {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

/// Frozen-encoder embeddings for the labelled events of train and test.
pub fn labelled_embeddings(model: &Model, split: &Split, batch_size: usize) -> Result<(LabelledEmbeddings, LabelledEmbeddings)> {
    if !split.train.has_labels() {
        return Err(Error::MissingLabels);
    }
    let mut bank = NodeMemoryBank::new(split.train.num_nodes(), &model.cfg);
    let mut out = [LabelledEmbeddings::default(), LabelledEmbeddings::default(), LabelledEmbeddings::default()];
    let mut tape = Tape::new();
    for (seg, stream) in [&split.train, &split.val, &split.test].into_iter().enumerate() {
        for r in chronological_batches(stream.events(), batch_size) {
            tape.clear();
            let start = r.start;
            let b = encoder::process_batch::<ChaCha8Rng>(model, &mut bank, &mut tape, stream, r, &[], None)?;
            for (k, &z) in b.src.iter().enumerate() {
                if let Some(label) = stream.event(start + k).label {
                    out[seg].x.push(tape.value(z).to_vec());
                    out[seg].y.push(label);
                }
            }
        }
    }
    let [train, _, test] = out;
    Ok((train, test))
}

fn dropout(tape: &mut Tape, h: Var, dropout: &mut Option<(f64, &mut ChaCha8Rng)>) -> Var {
    match dropout {
        Some((rate, rng)) if *rate > 0.0 => {
            let keep = 1.0 - *rate;
            let mask: Vec<f64> = (0..tape.dim(h))
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            tape.mask(h, &mask)
        }
        _ => h,
    }
}

fn classifier(tape: &mut Tape, model: &Model, x: Var, mut drop: Option<(f64, &mut ChaCha8Rng)>) -> Var {
    let (s, ids) = (&model.store, &model.ids);
    let h = tape.affine(s, ids.cls_w1, Some(ids.cls_b1), x);
    let h = tape.elu(h);
    let h = dropout(tape, h, &mut drop);
    let h = tape.affine(s, ids.cls_w2, Some(ids.cls_b2), h);
    let h = tape.elu(h);
    let h = dropout(tape, h, &mut drop);
    tape.affine(s, ids.cls_w3, Some(ids.cls_b3), h)
}

/// Logits of the three-layer decoder.
pub fn classifier_scores(model: &Model, x: &[Vec<f64>]) -> Vec<f64> {
    let mut tape = Tape::new();
    x.iter()
        .map(|row| {
            tape.clear();
            let v = tape.input(row);
            let s = classifier(&mut tape, model, v, None);
            tape.scalar(s)
        })
        .collect()
}

/// Trains only the decoder tensors with binary cross-entropy.
pub fn fit_classifier(model: &mut Model, data: &LabelledEmbeddings, cfg: &TrainConfig) -> Result<()> {
    if data.y.is_empty() {
        return Err(Error::MissingLabels);
    }
    if data.y.iter().all(|&y| y == data.y[0]) {
        return Err(Error::DegenerateLabels { segment: "train", label: data.y[0] });
    }
    let mut adam = Adam::new(&model.store, model.ids.classifier().to_vec(), cfg.cls_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC1A5_5000);
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    let mut tape = Tape::new();
    for epoch in 0..cfg.cls_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            tape.clear();
            let mut terms = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let x = tape.input(&data.x[i]);
                let s = classifier(&mut tape, model, x, Some((cfg.dropout, &mut rng)));
                let s = if data.y[i] { s } else { tape.scale(s, -1.0) };
                terms.push(tape.log_sigmoid(s));
            }
            let sum = tape.sum(&terms);
            let loss = tape.scale(sum, -1.0 / chunk.len() as f64);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Divergence(format!("classifier loss {value} in epoch {epoch}")));
            }
            total += value * chunk.len() as f64;
            model.store.zero_grad();
            tape.backward(loss, &mut model.store);
            adam.step(&mut model.store);
        }
        log::debug!("classifier epoch {epoch}: bce {:.5}", total / data.y.len() as f64);
    }
    model.store.zero_grad();
    Ok(())
}

/// Fits the decoder on train-segment embeddings and reports test AUC.
pub fn evaluate_node_classification(model: &mut Model, split: &Split, cfg: &TrainConfig) -> Result<ClassMetrics> {
    let (train, test) = labelled_embeddings(model, split, cfg.batch_size)?;
    fit_classifier(model, &train, cfg)?;
    if test.y.is_empty() {
        return Err(Error::MissingLabels);
    }
    if test.y.iter().all(|&y| y == test.y[0]) {
        return Err(Error::DegenerateLabels { segment: "test", label: test.y[0] });
    }
    let scores = classifier_scores(model, &test.x);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (s, &y) in scores.into_iter().zip(&test.y) {
        if y {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok(ClassMetrics {
        auc: auc(&pos, &neg),
        train_samples: train.y.len(),
        test_samples: test.y.len(),
    })
}
