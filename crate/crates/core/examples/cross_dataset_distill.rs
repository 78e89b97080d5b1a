//! Adapts a private-split teacher to the public identities: fine-tunes a
//! public head on frozen features, trains the 128-d adapter on labels plus
//! softened head outputs, and compares the four adaptation variants.

use bridge_distill::datagen::{Dataset, DatasetConfig};
use bridge_distill::distill::{DistillConfig, TeacherSet};
use bridge_distill::pipeline::{adapt, adaptation_ablation, train_teacher, TeacherConfig, TeacherFeatures, TeacherKind};

fn main() -> bridge_distill::Result<()> {
    let ds = Dataset::generate(&DatasetConfig { identities: 30, samples_per_identity: 16, ..Default::default() })?;
    let (teacher, _) = train_teacher(&ds, &TeacherConfig { epochs: 4, ..Default::default() }, TeacherKind::V)?;
    let feats = TeacherFeatures::compute(&ds, &[&teacher], TeacherSet::V)?;
    println!("teacher features: {:?} train, {:?} test", feats.train.shape(), feats.test.shape());

    let cfg = DistillConfig { epochs_adapter: 20, ..Default::default() };
    let bridge = adapt(&ds, &feats, &cfg, 20)?;
    println!("head     {}", bridge.finetune_report.last().expect("trained").line());
    println!("adapter  {}", bridge.adapter_report.last().expect("trained").line());
    println!("adapted features: {:?}", bridge.adapt_features(&feats.test)?.shape());

    for lambda in [0.0, 1.0, 4.0] {
        let cases = adaptation_ablation(&ds, &[&teacher], &feats, &DistillConfig { lambda, ..cfg.clone() }, 20)?;
        println!("lambda {lambda}: {}", cases.line(cfg.seed));
    }
    Ok(())
}
