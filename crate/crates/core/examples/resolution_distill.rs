//! Distills a 16x16 student from adapted teacher features and compares it
//! with a classification-only student on target verification.

use bridge_distill::datagen::{Dataset, DatasetConfig, Part, Split};
use bridge_distill::distill::{DistillConfig, Mode, TeacherSet};
use bridge_distill::eval::{evaluate, EvalConfig};
use bridge_distill::pipeline::{
    adapt, distill_student, lr_set, mimic_width, pretrained_student, regression_targets, train_teacher, TeacherConfig,
    TeacherFeatures, TeacherKind,
};

fn main() -> bridge_distill::Result<()> {
    let ds = Dataset::generate(&DatasetConfig { identities: 30, samples_per_identity: 16, ..Default::default() })?;
    let (teacher, _) = train_teacher(&ds, &TeacherConfig { epochs: 4, ..Default::default() }, TeacherKind::V)?;
    let feats = TeacherFeatures::compute(&ds, &[&teacher], TeacherSet::V)?;
    let base = DistillConfig { epochs_pretrain: 3, epochs_main: 5, ..Default::default() };
    let bridge = adapt(&ds, &feats, &base, 20)?;
    let train = lr_set(&ds, base.resolution, Split::Public, Some(Part::Train), false)?;
    let eval = EvalConfig { pos_pairs: 60, neg_pairs: 60, ..Default::default() };

    for (mode, teachers) in [(Mode::C, TeacherSet::O), (Mode::Sc, TeacherSet::V), (Mode::Dc, TeacherSet::V)] {
        let cfg = DistillConfig { mode, teacher_set: teachers, ..base.clone() };
        let (mut student, _) = pretrained_student(&ds, &train, &cfg, mimic_width(mode, Some(&feats))?)?;
        let targets = regression_targets(&train, &feats, Some(&bridge), mode)?;
        let report = distill_student(&mut student, &train, targets.as_ref(), &cfg)?;
        let (row, _) = evaluate(&ds, &student, cfg.resolution, &cfg.model_name(), cfg.seed, &eval)?;
        println!("{row}\n    last epoch {}", report.last().expect("trained").line());
    }
    Ok(())
}
