use super::config::SgdConfig;
use super::fit::{check_labels, count_hits, run_epochs, sgd_update, StepStats};
use super::report::TrainReport;
use crate::autodiff::{softmax_t, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{one_hot, Element, Tensor};
use crate::zoo::{build_adapter, Network};

/// Loss nodes of one objective evaluation. Terms a mode does not use are
/// `None`.
#[derive(Clone, Copy, Debug)]
pub struct Objective {
    pub total: Var,
    pub class: Option<Var>,
    pub aux: Option<Var>,
    pub logits: Var,
    pub features: Var,
}

impl Objective {
    pub fn values<T: Element>(&self, g: &Graph<T>) -> (f64, f64, f64) {
        let v = |x: Option<Var>| x.map(|x| g.value(x).item().as_f64()).unwrap_or(0.0);
        (v(self.class), v(self.aux), g.value(self.total).item().as_f64())
    }
}

/// Softened predictions of the fine-tuned teacher head: `softmax(z / t)`.
pub fn make_soft_targets(head: &Network<f32>, features: &Tensor<f32>, t: f64) -> Result<Tensor<f32>> {
    let (_, logits) = head.infer(features, 256)?;
    softmax_t(&logits, t)
}

/// The teacher head's plain softmax divided by `t`. Rows no longer sum to
/// one; used only by the literal-temperature variant.
pub fn literal_soft_targets(head: &Network<f32>, features: &Tensor<f32>, t: f64) -> Result<Tensor<f32>> {
    let mut p = make_soft_targets(head, features, 1.0)?;
    let inv = 1.0 / t as f32;
    p.data_mut().iter_mut().for_each(|v| *v *= inv);
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterConfig {
    pub lambda: f64,
    pub temperature: f64,
    pub literal_temperature: bool,
    pub sgd: SgdConfig,
}

/// Adapter loss on one batch: cross-entropy against the labels plus
/// `lambda` times cross-entropy against the softened teacher targets, both
/// taken at temperature `t` on the adapter side.
#[allow(clippy::too_many_arguments)]
pub fn adapter_objective<T: Element>(
    g: &mut Graph<T>,
    adapter: &mut Network<T>,
    features: &Tensor<T>,
    labels: &[usize],
    soft_targets: Option<&Tensor<T>>,
    lambda: f64,
    t: f64,
    literal: bool,
    train: bool,
) -> Result<Objective> {
    let soft = soft_targets.ok_or_else(|| {
        Error::StageOrder("soft targets need the teacher classifier fine-tuned on the public set".into())
    })?;
    let classes = adapter.output_dim();
    check_labels(features, labels, classes)?;
    let x = g.input(features.clone());
    let out = adapter.forward(g, x, train)?;
    let class = g.soft_cross_entropy(out.logits, &one_hot(labels, classes)?, 1.0)?;
    let distill = if literal {
        g.soft_cross_entropy_unchecked(out.logits, soft, 1.0)?
    } else {
        g.soft_cross_entropy(out.logits, soft, t)?
    };
    let total = g.weighted_sum(class, distill, lambda)?;
    Ok(Objective { total, class: Some(class), aux: Some(distill), logits: out.logits, features: out.features })
}

/// Trains a fresh adapter on teacher features of the public training set.
pub fn train_adapter(
    features: &Tensor<f32>,
    labels: &[usize],
    soft_targets: &Tensor<f32>,
    classes: usize,
    cfg: &AdapterConfig,
) -> Result<(Network<f32>, TrainReport)> {
    if features.rank() != 2 || features.shape()[0] == 0 {
        return Err(crate::error::invalid("adapter training needs a non-empty N×d feature set"));
    }
    let mut adapter = build_adapter(features.shape()[1], classes, cfg.sgd.seed)?;
    let report = run_epochs(labels.len(), &cfg.sgd, |batch| {
        let mut g = Graph::new();
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let obj = adapter_objective(
            &mut g,
            &mut adapter,
            &features.select_rows(batch)?,
            &y,
            Some(&soft_targets.select_rows(batch)?),
            cfg.lambda,
            cfg.temperature,
            cfg.literal_temperature,
            true,
        )?;
        let (class_loss, aux_loss, total) = obj.values(&g);
        let correct = count_hits(g.value(obj.logits), &y);
        sgd_update(&mut adapter, &g, obj.total, cfg.sgd.lr)?;
        Ok(StepStats { class_loss, aux_loss, total, correct })
    })?;
    Ok((adapter, report))
}
