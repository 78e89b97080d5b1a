//! Pretrains a teacher on the private split only, then checks its held-out
//! accuracy and a checkpoint round trip.

use bridge_distill::datagen::{Dataset, DatasetConfig, Split};
use bridge_distill::pipeline::{teacher_private_accuracy, teacher_spec_for, train_teacher, TeacherConfig, TeacherKind};
use bridge_distill::zoo::Network;

fn main() -> bridge_distill::Result<()> {
    let ds = Dataset::generate(&DatasetConfig { identities: 30, samples_per_identity: 16, ..Default::default() })?;
    let cfg = TeacherConfig { epochs: 4, ..Default::default() };

    let (teacher, report) = train_teacher(&ds, &cfg, TeacherKind::V)?;
    print!("{}", report.to_lines());
    let acc = teacher_private_accuracy(&ds, &teacher)?;
    let chance = 1.0 / ds.classes(Split::Private).len() as f64;
    println!("params {}  private test accuracy {acc:.3} (chance {chance:.3})", teacher.backbone().param_count());

    let path = std::env::temp_dir().join("bd_teacher_V.bdck");
    teacher.backbone().save(&path, &[])?;
    let mut loaded = Network::new(teacher_spec_for(&ds, &cfg, TeacherKind::V)?, 123)?;
    loaded.load(&path)?;
    let probe = bridge_distill::pipeline::hr_set(&ds, Split::Private, None)?.images;
    assert_eq!(teacher.features(&probe)?, loaded.infer(&probe, 64)?.0);
    println!("checkpoint {} reproduces the features exactly", path.display());
    Ok(())
}
