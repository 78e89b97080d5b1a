//! Verification and identification metrics and the ablation grid.

mod grid;
mod metrics;

use std::fmt;

pub use grid::{run_ablation_grid, Cell, GridConfig, GridRow};
pub use metrics::{
    best_threshold_accuracy, cosine_similarity, l2_normalize_rows, roc_curve, topk_error, verification_features,
    verify_features, RocCurve, RocPoint, Verification,
};

use crate::datagen::{verification_pairs, Dataset, Pair, Split};
use crate::distill::{fit_classifier, SgdConfig};
use crate::error::{invalid, Result};
use crate::pipeline::{lr_set, LabeledSet};
use crate::datagen::Part;
use crate::zoo::{build_head, Network};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub pos_pairs: usize,
    pub neg_pairs: usize,
    pub ks: Vec<usize>,
    /// Epochs for the identity head refit on the gallery.
    pub head_epochs: usize,
    pub head_lr: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { pos_pairs: 100, neg_pairs: 100, ks: vec![1, 5], head_epochs: 20, head_lr: 0.05, seed: 0 }
    }
}

/// Student verification: descriptors from mimic features and identity
/// logits, cosine scores over `pairs` of rows of `images`.
pub fn verify(student: &Network<f32>, images: &crate::Tensor<f32>, pairs: &[Pair]) -> Result<Verification> {
    if pairs.is_empty() {
        return Err(invalid("verification needs at least one pair"));
    }
    let (mimic, logits) = student.infer(images, 256)?;
    verify_features(&verification_features(&mimic, &logits)?, pairs)
}

/// Refits only the identity head on frozen mimic features of the gallery,
/// then scores top-k error on the probes.
pub fn identify(
    student: &Network<f32>,
    gallery: &LabeledSet,
    probes: &LabeledSet,
    ks: &[usize],
    sgd: &SgdConfig,
) -> Result<Vec<(usize, f64)>> {
    let classes = gallery.labels.iter().max().map_or(0, |&m| m + 1);
    if probes.labels.iter().any(|&l| l >= classes) {
        return Err(invalid("probe identities must all appear in the gallery"));
    }
    let (gallery_feats, _) = student.infer(&gallery.images, 256)?;
    let (probe_feats, _) = student.infer(&probes.images, 256)?;
    let mut head = build_head("identify", gallery_feats.shape()[1], classes, sgd.seed)?;
    fit_classifier(&mut head, &gallery_feats, &gallery.labels, sgd)?;
    let (_, logits) = head.infer(&probe_feats, 256)?;
    ks.iter().map(|&k| Ok((k, topk_error(&logits, &probes.labels, k)?))).collect()
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub accuracy: f64,
    pub auc: f64,
    pub tpr_at_01: f64,
    pub top1: f64,
    pub top5: f64,
    pub n_pairs: usize,
    pub n_probes: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "model={} seed={} acc={:.6} auc={:.6} tpr@0.1={:.6} top1={:.6} top5={:.6}",
            self.model, self.seed, self.accuracy, self.auc, self.tpr_at_01, self.top1, self.top5
        )
    }
}

/// Verification pairs over the target probes at `res`; the same pairs for
/// every model given the same seed.
pub fn target_pairs(ds: &Dataset, res: usize, cfg: &EvalConfig) -> Result<(LabeledSet, Vec<Pair>)> {
    let probes = lr_set(ds, res, Split::Target, None, true)?;
    let pairs = verification_pairs(&probes.identities, cfg.pos_pairs, cfg.neg_pairs, cfg.seed)?;
    Ok((probes, pairs))
}

/// Verification on target pairs plus closed-set identification of held-out
/// target probes against a gallery of the target training copies.
pub fn evaluate(
    ds: &Dataset,
    student: &Network<f32>,
    res: usize,
    model: &str,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Verification)> {
    let (probes, pairs) = target_pairs(ds, res, cfg)?;
    let v = verify(student, &probes.images, &pairs)?;
    let gallery = lr_set(ds, res, Split::Target, Some(Part::Train), false)?;
    let test = lr_set(ds, res, Split::Target, Some(Part::Test), true)?;
    let sgd = SgdConfig { lr: cfg.head_lr, epochs: cfg.head_epochs, batch_size: 32, seed: cfg.seed };
    // With k at or above the identity count every probe is a hit.
    let classes = gallery.labels.iter().max().map_or(0, |&m| m + 1);
    let mut ks: Vec<usize> = cfg.ks.iter().map(|&k| k.min(classes)).collect();
    for k in [1, 5.min(classes)] {
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    let errs = identify(student, &gallery, &test, &ks, &sgd)?;
    let err = |k: usize| errs.iter().find(|(kk, _)| *kk == k.min(classes)).map(|e| e.1).expect("k requested above");
    let report = EvalReport {
        model: model.to_string(),
        seed,
        accuracy: v.accuracy,
        auc: v.roc.auc,
        tpr_at_01: v.tpr_at_fpr(0.1),
        top1: err(1),
        top5: err(5),
        n_pairs: pairs.len(),
        n_probes: test.labels.len(),
    };
    Ok((report, v))
}
