use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SgdConfig;
use super::report::{EpochRecord, TrainReport};
use crate::autodiff::{sgd_step, Graph, Var};
use crate::datagen::derive_seed;
use crate::error::{invalid, Error, Result};
use crate::tensor::{one_hot, Element, Tensor};
use crate::zoo::Network;

/// Loss terms and hit count of one minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub class_loss: f64,
    pub aux_loss: f64,
    pub total: f64,
    pub correct: usize,
}

/// Runs `cfg.epochs` passes over `n` items in seeded random order, calling
/// `step` per minibatch. Trailing batches of one item are dropped (batch
/// norm needs two). Records hold batch-size-weighted means.
pub fn run_epochs(n: usize, cfg: &SgdConfig, mut step: impl FnMut(&[usize]) -> Result<StepStats>) -> Result<TrainReport> {
    cfg.validate()?;
    if n < 2 {
        return Err(invalid(format!("training needs at least two samples, got {n}")));
    }
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64])));
        let (mut c, mut a, mut t, mut hits, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).filter(|b| b.len() >= 2).enumerate() {
            let s = step(batch).map_err(|e| match e {
                Error::NonFinite(op) => Error::NonFinite(format!("{op} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            let w = batch.len() as f64;
            c += s.class_loss * w;
            a += s.aux_loss * w;
            t += s.total * w;
            hits += s.correct;
            seen += batch.len();
        }
        let seen_f = seen as f64;
        records.push(EpochRecord {
            epoch,
            class_loss: c / seen_f,
            aux_loss: a / seen_f,
            total: t / seen_f,
            acc: hits as f64 / seen_f,
        });
    }
    Ok(TrainReport { records, wall_clock_s: start.elapsed().as_secs_f64(), checkpoint: None })
}

/// Backward from `loss`, then one SGD update of `net`.
pub fn sgd_update<T: Element>(net: &mut Network<T>, g: &Graph<T>, loss: Var, lr: f64) -> Result<()> {
    let grads = g.backward(loss)?;
    grads.apply_to(net.store_mut())?;
    sgd_step(net.store_mut(), lr)
}

pub fn argmax_rows<T: Element>(t: &Tensor<T>) -> Vec<usize> {
    let cols = t.shape()[1];
    t.data()
        .chunks(cols)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

pub fn count_hits<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    argmax_rows(logits).iter().zip(labels).filter(|(p, l)| p == l).count()
}

/// Fits `net` to `labels` by softmax cross-entropy on its logits.
pub fn fit_classifier(net: &mut Network<f32>, inputs: &Tensor<f32>, labels: &[usize], cfg: &SgdConfig) -> Result<TrainReport> {
    let classes = net.output_dim();
    check_labels(inputs, labels, classes)?;
    run_epochs(labels.len(), cfg, |batch| {
        let mut g = Graph::new();
        let x = g.input(inputs.select_rows(batch)?);
        let out = net.forward(&mut g, x, true)?;
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let loss = g.soft_cross_entropy(out.logits, &one_hot(&y, classes)?, 1.0)?;
        let value = g.value(loss).item() as f64;
        let correct = count_hits(g.value(out.logits), &y);
        sgd_update(net, &g, loss, cfg.lr)?;
        Ok(StepStats { class_loss: value, aux_loss: 0.0, total: value, correct })
    })
}

/// Fraction of rows of `inputs` whose predicted class equals the label.
pub fn accuracy(net: &Network<f32>, inputs: &Tensor<f32>, labels: &[usize]) -> Result<f64> {
    check_labels(inputs, labels, net.output_dim())?;
    let (_, logits) = net.infer(inputs, 256)?;
    Ok(count_hits(&logits, labels) as f64 / labels.len() as f64)
}

pub(crate) fn check_labels<T: Element>(inputs: &Tensor<T>, labels: &[usize], classes: usize) -> Result<()> {
    if inputs.shape()[0] != labels.len() {
        return Err(invalid(format!("{} inputs but {} labels", inputs.shape()[0], labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}
