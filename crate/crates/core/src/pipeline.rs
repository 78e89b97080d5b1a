//! Stage functions over a generated [`Dataset`]: teacher pretraining on the
//! private split, adaptation on the public split, student distillation at a
//! low resolution, and the adaptation ablation.

use std::collections::HashMap;

use crate::datagen::{derive_seed, disjoint, stack_images, Dataset, FaceSample, Part, Split};
use crate::distill::{
    accuracy, fit_classifier, literal_soft_targets, make_soft_targets, pretrain_student, train_adapter,
    train_student, AdapterConfig, DistillConfig, Mode, SgdConfig, TeacherSet, TrainReport,
};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;
use crate::zoo::{build_head, build_student_with_mimic, ensemble_features, teacher_spec, Network, TeacherHandle};

/// Which pretrained teacher. The second one is a slimmer network trained
/// from a different seed, so the two disagree in useful ways.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TeacherKind {
    V,
    C,
}

impl TeacherKind {
    pub fn name(self) -> &'static str {
        match self {
            TeacherKind::V => "V",
            TeacherKind::C => "C",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherConfig {
    pub feature_dim: usize,
    /// Width multiplier of teacher V; teacher C uses half of it.
    pub scale: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs for the public-identity head on frozen teacher features.
    pub finetune_epochs: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self { feature_dim: 256, scale: 1.0, lr: 0.01, epochs: 6, batch_size: 32, finetune_epochs: 30, seed: 0 }
    }
}

impl TeacherConfig {
    pub fn scale_of(&self, kind: TeacherKind) -> f64 {
        match kind {
            TeacherKind::V => self.scale,
            TeacherKind::C => self.scale * 0.5,
        }
    }

    pub fn sgd(&self, kind: TeacherKind) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, &[0x7e, kind as u64]),
        }
    }
}

/// Images of a sample set with class labels within `split`.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub identities: Vec<usize>,
    /// Index of each sample (or of its high-resolution source) within its
    /// identity.
    pub sources: Vec<usize>,
}

fn labeled(ds: &Dataset, split: Split, samples: &[&FaceSample]) -> Result<LabeledSet> {
    if samples.is_empty() {
        return Err(invalid(format!("no {split} samples selected")));
    }
    Ok(LabeledSet {
        images: stack_images(samples)?,
        labels: samples.iter().map(|s| ds.class_of(split, s.identity)).collect::<Result<_>>()?,
        identities: samples.iter().map(|s| s.identity).collect(),
        sources: samples.iter().map(|s| s.lineage.as_ref().map_or(s.index, |l| l.source)).collect(),
    })
}

pub fn hr_set(ds: &Dataset, split: Split, part: Option<Part>) -> Result<LabeledSet> {
    labeled(ds, split, &ds.hr_samples(split, part))
}

/// Every degraded copy, or only the first of each set when `probes_only`.
pub fn lr_set(ds: &Dataset, res: usize, split: Split, part: Option<Part>, probes_only: bool) -> Result<LabeledSet> {
    let samples = if probes_only { ds.lr_probes(res, split, part)? } else { ds.lr_samples(res, split, part)? };
    labeled(ds, split, &samples)
}

/// Pretrains a teacher on the private training split and nothing else.
pub fn train_teacher(ds: &Dataset, cfg: &TeacherConfig, kind: TeacherKind) -> Result<(TeacherHandle, TrainReport)> {
    let private = hr_set(ds, Split::Private, Some(Part::Train))?;
    let spec = teacher_spec_for(ds, cfg, kind)?;
    let sgd = cfg.sgd(kind);
    let mut net = Network::new(spec, sgd.seed)?;
    let report = fit_classifier(&mut net, &private.images, &private.labels, &sgd)?;
    Ok((TeacherHandle::new(net, ds.classes(Split::Private).to_vec()), report))
}

/// Architecture of a teacher over the private identities of `ds`.
pub fn teacher_spec_for(ds: &Dataset, cfg: &TeacherConfig, kind: TeacherKind) -> Result<crate::zoo::ModelSpec> {
    teacher_spec(ds.classes(Split::Private).len(), cfg.feature_dim, ds.hr_size, cfg.scale_of(kind))
}

/// Accuracy of the original classifier on held-out private samples.
pub fn teacher_private_accuracy(ds: &Dataset, teacher: &TeacherHandle) -> Result<f64> {
    let test = hr_set(ds, Split::Private, Some(Part::Test))?;
    accuracy(teacher.backbone(), &test.images, &test.labels)
}

/// Frozen teacher features of a teacher set, computed once and reused by
/// every stage that needs them.
#[derive(Clone, Debug)]
pub struct TeacherFeatures {
    pub set: TeacherSet,
    /// Public training features, rows aligned with `hr_set(Public, Train)`.
    pub train: Tensor<f32>,
    pub test: Tensor<f32>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    /// Row of `train` for each (identity, sample index).
    pub row_of: HashMap<(usize, usize), usize>,
}

impl TeacherFeatures {
    pub fn compute(ds: &Dataset, teachers: &[&TeacherHandle], set: TeacherSet) -> Result<Self> {
        let chosen = select(teachers, set)?;
        let train = hr_set(ds, Split::Public, Some(Part::Train))?;
        let test = hr_set(ds, Split::Public, Some(Part::Test))?;
        for t in &chosen {
            disjoint(t.private_ids(), ds.classes(Split::Public), "teacher private/public")?;
        }
        let row_of = train.identities.iter().zip(&train.sources).enumerate().map(|(r, (&i, &s))| ((i, s), r)).collect();
        Ok(Self {
            set,
            train: ensemble_features(&chosen, &train.images)?,
            test: ensemble_features(&chosen, &test.images)?,
            train_labels: train.labels,
            test_labels: test.labels,
            row_of,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.shape()[1]
    }
}

/// The members of `set` among the (V, C) pair.
pub fn select<'a>(teachers: &[&'a TeacherHandle], set: TeacherSet) -> Result<Vec<&'a TeacherHandle>> {
    if set == TeacherSet::O {
        return Err(Error::StageOrder("teacher set O has no teacher to adapt".into()));
    }
    set.members()
        .iter()
        .map(|&i| {
            teachers.get(i).copied().ok_or_else(|| {
                Error::MissingArtifact {
                    path: format!("teacher {}", ["V", "C"][i]).into(),
                    hint: "train it first with the train-teacher command".into(),
                }
            })
        })
        .collect()
}

/// Outputs of the adaptation stage.
#[derive(Clone, Debug)]
pub struct Bridge {
    pub set: TeacherSet,
    /// Public-identity head on frozen teacher features.
    pub finetuned: Network<f32>,
    pub adapter: Network<f32>,
    pub finetune_report: TrainReport,
    pub adapter_report: TrainReport,
}

impl Bridge {
    /// Adapted 128-d features of teacher features.
    pub fn adapt_features(&self, teacher_features: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.adapter.infer(teacher_features, 256)?.0)
    }
}

pub fn adapter_config(cfg: &DistillConfig) -> AdapterConfig {
    AdapterConfig {
        lambda: cfg.lambda,
        temperature: cfg.temperature,
        literal_temperature: cfg.literal_temperature,
        sgd: cfg.adapter_sgd(cfg.epochs_adapter, 0xad),
    }
}

/// Fine-tunes the public head on frozen features, then trains the adapter
/// against the head's softened predictions.
pub fn adapt(ds: &Dataset, feats: &TeacherFeatures, cfg: &DistillConfig, finetune_epochs: usize) -> Result<Bridge> {
    let classes = ds.classes(Split::Public).len();
    let ft_sgd = cfg.adapter_sgd(finetune_epochs, 0xf7);
    let mut finetuned = build_head("teacher_ft", feats.dim(), classes, ft_sgd.seed)?;
    let finetune_report = fit_classifier(&mut finetuned, &feats.train, &feats.train_labels, &ft_sgd)?;
    let soft = if cfg.literal_temperature {
        literal_soft_targets(&finetuned, &feats.train, cfg.temperature)?
    } else {
        make_soft_targets(&finetuned, &feats.train, cfg.temperature)?
    };
    let (adapter, adapter_report) =
        train_adapter(&feats.train, &feats.train_labels, &soft, classes, &adapter_config(cfg))?;
    Ok(Bridge { set: feats.set, finetuned, adapter, finetune_report, adapter_report })
}

/// Regression targets for every degraded public training image: the
/// adapted (or, for `dc`, raw) features of its high-resolution source.
pub fn regression_targets(
    train: &LabeledSet,
    feats: &TeacherFeatures,
    bridge: Option<&Bridge>,
    mode: Mode,
) -> Result<Option<Tensor<f32>>> {
    if !mode.regresses() {
        return Ok(None);
    }
    let source = if mode.adapted() {
        let bridge = bridge.ok_or_else(|| Error::StageOrder(format!("mode {mode} needs a trained adapter")))?;
        if bridge.set != feats.set {
            return Err(invalid(format!("adapter was trained for teacher set {}, not {}", bridge.set, feats.set)));
        }
        bridge.adapt_features(&feats.train)?
    } else {
        feats.train.clone()
    };
    let rows = train
        .identities
        .iter()
        .zip(&train.sources)
        .map(|(&i, &s)| {
            feats.row_of.get(&(i, s)).copied().ok_or_else(|| invalid(format!("no teacher features for identity {i} sample {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(source.select_rows(&rows)?))
}

/// Width of the student's mimic layer for a mode.
pub fn mimic_width(mode: Mode, feats: Option<&TeacherFeatures>) -> Result<usize> {
    match (mode, feats) {
        (Mode::Dc, Some(f)) => Ok(f.dim()),
        (Mode::Dc, None) => Err(Error::StageOrder("mode dc needs teacher features".into())),
        _ => Ok(crate::zoo::MIMIC_DIM),
    }
}

/// A student after classification-only pretraining.
pub fn pretrained_student(
    ds: &Dataset,
    train: &LabeledSet,
    cfg: &DistillConfig,
    mimic: usize,
) -> Result<(Network<f32>, TrainReport)> {
    let classes = ds.classes(Split::Public).len();
    let sgd = cfg.sgd(cfg.epochs_pretrain, 0x9e);
    let mut student = build_student_with_mimic(cfg.resolution, classes, mimic, derive_seed(cfg.seed, &[0x51]))?;
    let report = if cfg.epochs_pretrain > 0 {
        pretrain_student(&mut student, &train.images, &train.labels, &sgd)?
    } else {
        TrainReport::default()
    };
    Ok((student, report))
}

/// Main distillation of a (pretrained) student on degraded public images.
pub fn distill_student(
    student: &mut Network<f32>,
    train: &LabeledSet,
    targets: Option<&Tensor<f32>>,
    cfg: &DistillConfig,
) -> Result<TrainReport> {
    train_student(student, &train.images, &train.labels, targets, cfg.mode, &cfg.sgd(cfg.epochs_main, 0x3a))
}

/// Public-test accuracies of the four adaptation variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationCases {
    /// Head on raw teacher features.
    pub raw: f64,
    /// Adapter trained on classification only.
    pub classify: f64,
    /// Adapter trained on classification plus softened teacher targets.
    pub distill: f64,
    /// Joint head over a private identity subset and the public identities.
    pub mixed: f64,
}

impl AblationCases {
    pub fn line(&self, seed: u64) -> String {
        format!(
            "seed={seed} case1={:.6} case2={:.6} case3={:.6} case4={:.6}",
            self.raw, self.classify, self.distill, self.mixed
        )
    }
}

pub fn adaptation_ablation(
    ds: &Dataset,
    teachers: &[&TeacherHandle],
    feats: &TeacherFeatures,
    cfg: &DistillConfig,
    finetune_epochs: usize,
) -> Result<AblationCases> {
    let distilled = adapt(ds, feats, cfg, finetune_epochs)?;
    let raw = accuracy(&distilled.finetuned, &feats.test, &feats.test_labels)?;
    let distill = accuracy(&distilled.adapter, &feats.test, &feats.test_labels)?;
    let plain = adapt(ds, feats, &DistillConfig { lambda: 0.0, ..cfg.clone() }, finetune_epochs)?;
    let classify = accuracy(&plain.adapter, &feats.test, &feats.test_labels)?;
    let mixed = mixed_classifier(ds, teachers, feats, &cfg.adapter_sgd(finetune_epochs, 0x4c))?;
    Ok(AblationCases { raw, classify, distill, mixed })
}

/// Trains one head over frozen features of half the private identities plus
/// all public identities, and scores it on the public test samples.
pub fn mixed_classifier(
    ds: &Dataset,
    teachers: &[&TeacherHandle],
    feats: &TeacherFeatures,
    sgd: &SgdConfig,
) -> Result<f64> {
    let chosen = select(teachers, feats.set)?;
    let private_ids = ds.classes(Split::Private);
    let subset = &private_ids[..private_ids.len().div_ceil(2)];
    train_mixed_classifier(ds, &chosen, subset, feats, sgd)
}

pub fn train_mixed_classifier(
    ds: &Dataset,
    teachers: &[&TeacherHandle],
    private_subset: &[usize],
    feats: &TeacherFeatures,
    sgd: &SgdConfig,
) -> Result<f64> {
    disjoint(private_subset, ds.classes(Split::Public), "mixed classifier private/public")?;
    let samples: Vec<&FaceSample> = ds
        .hr_samples(Split::Private, Some(Part::Train))
        .into_iter()
        .filter(|s| private_subset.contains(&s.identity))
        .collect();
    let private = labeled(ds, Split::Private, &samples)?;
    let private_feats = ensemble_features(teachers, &private.images)?;
    let offset = private_subset.len();
    let class_in_subset: HashMap<usize, usize> = private_subset.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let mut labels: Vec<usize> = private.identities.iter().map(|i| class_in_subset[i]).collect();
    labels.extend(feats.train_labels.iter().map(|&l| l + offset));
    let inputs = Tensor::concat_rows(&[&private_feats, &feats.train])?;
    let classes = offset + ds.classes(Split::Public).len();
    let mut head = build_head("mixed", feats.dim(), classes, sgd.seed)?;
    fit_classifier(&mut head, &inputs, &labels, sgd)?;
    let test_labels: Vec<usize> = feats.test_labels.iter().map(|&l| l + offset).collect();
    accuracy(&head, &feats.test, &test_labels)
}
