use super::adapter::Objective;
use super::config::{Mode, SgdConfig};
use super::fit::{check_labels, count_hits, fit_classifier, run_epochs, sgd_update, StepStats};
use super::report::TrainReport;
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::tensor::{one_hot, Element, Tensor};
use crate::zoo::Network;

/// Student loss on one batch of degraded images. Classification uses the
/// identity head; regression is the per-sample squared distance between the
/// student's mimic features and the teacher-side targets.
pub fn student_objective<T: Element>(
    g: &mut Graph<T>,
    student: &mut Network<T>,
    images: &Tensor<T>,
    labels: &[usize],
    targets: Option<&Tensor<T>>,
    mode: Mode,
    train: bool,
) -> Result<Objective> {
    let classes = student.output_dim();
    check_labels(images, labels, classes)?;
    let x = g.input(images.clone());
    let out = student.forward(g, x, train)?;
    let class = if mode.classifies() {
        Some(g.soft_cross_entropy(out.logits, &one_hot(labels, classes)?, 1.0)?)
    } else {
        None
    };
    let reg = if mode.regresses() {
        let targets = targets.ok_or_else(|| {
            Error::StageOrder(format!("mode {mode} needs teacher targets for every training image"))
        })?;
        let width = g.value(out.features).shape()[1];
        if targets.shape() != [images.shape()[0], width] {
            return Err(Error::shape(
                "student_objective",
                format!("targets {:?} but mimic layer gives {width} features", targets.shape()),
            ));
        }
        let t = g.input(targets.clone());
        Some(g.sum_squared_error(out.features, t)?)
    } else {
        None
    };
    let total = match (class, reg) {
        (Some(c), Some(r)) => g.add(c, r)?,
        (Some(c), None) => c,
        (None, Some(r)) => r,
        (None, None) => unreachable!("every mode classifies or regresses"),
    };
    Ok(Objective { total, class, aux: reg, logits: out.logits, features: out.features })
}

/// Classification-only pretraining on degraded public images.
pub fn pretrain_student(
    student: &mut Network<f32>,
    images: &Tensor<f32>,
    labels: &[usize],
    cfg: &SgdConfig,
) -> Result<TrainReport> {
    fit_classifier(student, images, labels, cfg)
}

/// Main student training. `targets` rows align with `images` rows.
pub fn train_student(
    student: &mut Network<f32>,
    images: &Tensor<f32>,
    labels: &[usize],
    targets: Option<&Tensor<f32>>,
    mode: Mode,
    cfg: &SgdConfig,
) -> Result<TrainReport> {
    if mode.regresses() && targets.is_none() {
        return Err(Error::StageOrder(format!("mode {mode} needs teacher targets")));
    }
    run_epochs(labels.len(), cfg, |batch| {
        let mut g = Graph::new();
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let t = targets.map(|t| t.select_rows(batch)).transpose()?;
        let obj = student_objective(&mut g, student, &images.select_rows(batch)?, &y, t.as_ref(), mode, true)?;
        let (class_loss, aux_loss, total) = obj.values(&g);
        let correct = count_hits(g.value(obj.logits), &y);
        sgd_update(student, &g, obj.total, cfg.lr)?;
        Ok(StepStats { class_loss, aux_loss, total, correct })
    })
}
