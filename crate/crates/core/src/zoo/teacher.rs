use super::arch::build_head;
use super::network::Network;
use crate::datagen::disjoint;
use crate::distill::{fit_classifier, SgdConfig, TrainReport};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

const INFER_BATCH: usize = 64;

/// A classifier head retrained on frozen teacher features over the public
/// identities.
#[derive(Clone, Debug)]
pub struct FineTuned {
    pub head: Network<f32>,
    pub public_ids: Vec<usize>,
}

/// A pretrained teacher: a frozen backbone producing features, its original
/// classifier over the private identities, and optionally a head fine-tuned
/// on the public identities.
#[derive(Clone, Debug)]
pub struct TeacherHandle {
    backbone: Network<f32>,
    private_ids: Vec<usize>,
    finetuned: Option<FineTuned>,
}

impl TeacherHandle {
    pub fn new(backbone: Network<f32>, private_ids: Vec<usize>) -> Self {
        Self { backbone, private_ids, finetuned: None }
    }

    pub fn backbone(&self) -> &Network<f32> {
        &self.backbone
    }

    pub fn private_ids(&self) -> &[usize] {
        &self.private_ids
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim()
    }

    pub fn backbone_fingerprint(&self) -> u64 {
        self.backbone.fingerprint()
    }

    /// Backbone features in inference mode; nothing is recorded for
    /// gradients and the backbone is never modified.
    pub fn features(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.backbone.infer(images, INFER_BATCH)?.0)
    }

    /// Logits of the original classifier over the private identities.
    pub fn private_logits(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.backbone.infer(images, INFER_BATCH)?.1)
    }

    /// Replaces the classifier by a new one over the public identities,
    /// trained on frozen features. The backbone is left untouched.
    pub fn finetune_softmax(
        &mut self,
        public_features: &Tensor<f32>,
        labels: &[usize],
        public_ids: &[usize],
        cfg: &SgdConfig,
    ) -> Result<TrainReport> {
        let (head, report) = finetune_head(public_features, labels, public_ids, &self.private_ids, cfg)?;
        self.finetuned = Some(FineTuned { head, public_ids: public_ids.to_vec() });
        Ok(report)
    }

    pub fn set_finetuned(&mut self, head: Network<f32>, public_ids: Vec<usize>) -> Result<()> {
        disjoint(&self.private_ids, &public_ids, "teacher private/public")?;
        if head.spec().input != (super::InputKind::Vector { dim: self.feature_dim() }) {
            return Err(Error::shape("set_finetuned", "head input does not match the teacher features"));
        }
        self.finetuned = Some(FineTuned { head, public_ids });
        Ok(())
    }

    pub fn finetuned(&self) -> Result<&FineTuned> {
        self.finetuned
            .as_ref()
            .ok_or_else(|| Error::StageOrder("the teacher classifier has not been fine-tuned on the public set".into()))
    }
}

/// Trains a public-identity head on frozen features after checking that the
/// public and private identities are disjoint.
pub fn finetune_head(
    features: &Tensor<f32>,
    labels: &[usize],
    public_ids: &[usize],
    private_ids: &[usize],
    cfg: &SgdConfig,
) -> Result<(Network<f32>, TrainReport)> {
    disjoint(private_ids, public_ids, "teacher private/public")?;
    if public_ids.is_empty() || features.rank() != 2 {
        return Err(invalid("fine-tuning needs public identities and N×d features"));
    }
    let mut head = build_head("teacher_ft", features.shape()[1], public_ids.len(), cfg.seed)?;
    let report = fit_classifier(&mut head, features, labels, cfg)?;
    Ok((head, report))
}

/// Concatenated features of several teachers, in the order given.
pub fn ensemble_features(teachers: &[&TeacherHandle], images: &Tensor<f32>) -> Result<Tensor<f32>> {
    if teachers.is_empty() {
        return Err(invalid("ensemble needs at least one teacher"));
    }
    let feats = teachers.iter().map(|t| t.features(images)).collect::<Result<Vec<_>>>()?;
    Tensor::concat_cols(&feats.iter().collect::<Vec<_>>())
}
