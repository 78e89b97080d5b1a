use crate::datagen::Pair;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

const MIN_NORM: f64 = 1e-12;

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_similarity", format!("lengths {} and {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(invalid("cosine similarity of a zero-norm vector"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this count as positive. The first point uses
    /// `+inf`.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Largest true-positive rate among points with false-positive rate at
    /// most `fpr`.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        self.points.iter().filter(|p| p.fpr <= fpr + 1e-12).map(|p| p.tpr).fold(0.0, f64::max)
    }

    /// `fpr tpr` per line.
    pub fn to_columns(&self) -> String {
        self.points.iter().map(|p| format!("{:.6} {:.6}\n", p.fpr, p.tpr)).collect()
    }
}

/// ROC over every distinct score, tied scores entering together, with the
/// area by the trapezoid rule.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("roc_curve scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("ROC needs both positive and negative examples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp, mut auc) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("curve starts with the origin");
        let p = RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Accuracy of the best single threshold over the scored pairs themselves.
pub fn best_threshold_accuracy(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let roc = roc_curve(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let n = labels.len() as f64;
    Ok(roc
        .points
        .iter()
        .map(|p| ((p.tpr * pos + (1.0 - p.fpr) * neg) / n, p.threshold))
        .fold((0.0, f64::INFINITY), |best, cur| if cur.0 > best.0 { cur } else { best }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub accuracy: f64,
    pub threshold: f64,
    pub roc: RocCurve,
    pub n_pairs: usize,
}

impl Verification {
    pub fn tpr_at_fpr(&self, fpr: f64) -> f64 {
        self.roc.tpr_at(fpr)
    }
}

/// Scores pairs of rows of `features` by cosine similarity.
pub fn verify_features(features: &Tensor<f32>, pairs: &[Pair]) -> Result<Verification> {
    if pairs.is_empty() {
        return Err(invalid("verification needs at least one pair"));
    }
    let n = features.shape()[0];
    let mut scores = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.a >= n || p.b >= n {
            return Err(invalid(format!("pair ({}, {}) out of range for {n} samples", p.a, p.b)));
        }
        scores.push(cosine_similarity(features.row(p.a), features.row(p.b))?);
    }
    let labels: Vec<bool> = pairs.iter().map(|p| p.same).collect();
    let (accuracy, threshold) = best_threshold_accuracy(&scores, &labels)?;
    Ok(Verification { accuracy, threshold, roc: roc_curve(&scores, &labels)?, n_pairs: pairs.len() })
}

/// Rows scaled to unit length; zero rows stay zero.
pub fn l2_normalize_rows(t: &Tensor<f32>) -> Tensor<f32> {
    let mut out = t.clone();
    let cols = t.shape()[1];
    for row in out.data_mut().chunks_mut(cols) {
        let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm > MIN_NORM {
            row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        }
    }
    out
}

/// Verification descriptor: unit mimic features next to unit identity
/// logits.
pub fn verification_features(mimic: &Tensor<f32>, identity: &Tensor<f32>) -> Result<Tensor<f32>> {
    Tensor::concat_cols(&[&l2_normalize_rows(mimic), &l2_normalize_rows(identity)])
}

/// Fraction of rows whose label is not among the `k` highest logits. Ties
/// with the true class count against it.
pub fn topk_error(logits: &Tensor<f32>, labels: &[usize], k: usize) -> Result<f64> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() || labels.is_empty() {
        return Err(invalid("top-k needs one logit row per label"));
    }
    let classes = logits.shape()[1];
    if k == 0 || k > classes {
        return Err(invalid(format!("k = {k} but there are {classes} identities")));
    }
    let mut misses = 0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let truth = row[y];
        let above = row.iter().enumerate().filter(|&(j, &v)| j != y && v >= truth).count();
        if above >= k {
            misses += 1;
        }
    }
    Ok(misses as f64 / labels.len() as f64)
}
