//! A small grid over supervision modes and teacher sets at 16x16, with the
//! same dataset, teachers and evaluation pairs for every cell.

use bridge_distill::datagen::{Dataset, DatasetConfig};
use bridge_distill::distill::{DistillConfig, Mode, TeacherSet};
use bridge_distill::eval::{run_ablation_grid, EvalConfig, GridConfig};
use bridge_distill::pipeline::{train_teacher, TeacherConfig, TeacherKind};

fn main() -> bridge_distill::Result<()> {
    let ds = Dataset::generate(&DatasetConfig { identities: 30, samples_per_identity: 16, ..Default::default() })?;
    let tc = TeacherConfig { epochs: 4, ..Default::default() };
    let (v, _) = train_teacher(&ds, &tc, TeacherKind::V)?;
    let (c, _) = train_teacher(&ds, &tc, TeacherKind::C)?;
    let cfg = GridConfig {
        modes: Mode::ALL.to_vec(),
        teachers: TeacherSet::ALL.to_vec(),
        resolutions: vec![16],
        seeds: vec![0, 1],
        base: DistillConfig { epochs_adapter: 15, epochs_pretrain: 2, epochs_main: 3, ..Default::default() },
        finetune_epochs: 15,
        eval: EvalConfig { pos_pairs: 60, neg_pairs: 60, head_epochs: 10, ..Default::default() },
    };
    println!("{} cells", cfg.cells().len());
    println!("{:<18} {:>6} {:>6} {:>7} {:>6} {:>6}", "cell", "acc", "auc", "tpr@.1", "top1", "top5");
    for row in run_ablation_grid(&ds, &[&v, &c], &cfg)? {
        let r = &row.report;
        println!(
            "{:<18} {:6.3} {:6.3} {:7.3} {:6.3} {:6.3}",
            row.cell.dir_name(),
            r.accuracy,
            r.auc,
            r.tpr_at_01,
            r.top1,
            r.top5
        );
    }
    Ok(())
}
