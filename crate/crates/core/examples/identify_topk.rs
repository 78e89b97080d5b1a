//! Closed-set identification: a student's identity head is refit on frozen
//! mimic features of the target gallery, then scored by top-k error on
//! held-out target probes.

use bridge_distill::datagen::{Dataset, DatasetConfig, Part, Split};
use bridge_distill::distill::{DistillConfig, Mode, SgdConfig, TeacherSet};
use bridge_distill::eval::identify;
use bridge_distill::pipeline::{distill_student, lr_set, pretrained_student};

fn main() -> bridge_distill::Result<()> {
    let ds = Dataset::generate(&DatasetConfig { identities: 36, samples_per_identity: 16, ..Default::default() })?;
    let cfg = DistillConfig { mode: Mode::C, teacher_set: TeacherSet::O, epochs_pretrain: 2, epochs_main: 4, lr: 0.01, ..Default::default() };
    let train = lr_set(&ds, 16, Split::Public, Some(Part::Train), false)?;
    let (mut student, _) = pretrained_student(&ds, &train, &cfg, 128)?;
    distill_student(&mut student, &train, None, &cfg)?;

    let gallery = lr_set(&ds, 16, Split::Target, Some(Part::Train), false)?;
    let probes = lr_set(&ds, 16, Split::Target, Some(Part::Test), true)?;
    println!("gallery {} images, {} probes, {} identities", gallery.labels.len(), probes.labels.len(), ds.classes(Split::Target).len());
    let sgd = SgdConfig { lr: 0.05, epochs: 20, batch_size: 32, seed: 0 };
    for (k, err) in identify(&student, &gallery, &probes, &[1, 2, 3, 5], &sgd)? {
        println!("top-{k} error {err:.3}");
    }
    Ok(())
}
