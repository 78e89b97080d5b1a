use std::collections::hash_map::Entry;
use std::collections::HashMap;

use super::{evaluate, EvalConfig, EvalReport};
use crate::datagen::{Dataset, Part, Split};
use crate::distill::{DistillConfig, Mode, TeacherSet};
use crate::error::Result;
use crate::pipeline::{
    adapt, distill_student, lr_set, mimic_width, pretrained_student, regression_targets, Bridge, LabeledSet,
    TeacherFeatures,
};
use crate::zoo::{Network, TeacherHandle};
use crate::distill::TrainReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub resolution: usize,
    pub mode: Mode,
    pub teachers: TeacherSet,
    pub seed: u64,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("S-{}-{}-{}", self.resolution, self.mode, self.teachers)
    }

    /// Output directory name of the cell.
    pub fn dir_name(&self) -> String {
        format!("{}-seed{}", self.name(), self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub modes: Vec<Mode>,
    pub teachers: Vec<TeacherSet>,
    pub resolutions: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Shared settings; mode, teacher set, resolution and seed are
    /// overridden per cell.
    pub base: DistillConfig,
    pub finetune_epochs: usize,
    pub eval: EvalConfig,
}

impl GridConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &resolution in &self.resolutions {
            for &mode in &self.modes {
                for &teachers in &self.teachers {
                    if mode.regresses() == (teachers == TeacherSet::O) {
                        continue;
                    }
                    for &seed in &self.seeds {
                        out.push(Cell { resolution, mode, teachers, seed });
                    }
                }
            }
        }
        out
    }

    pub fn cell_config(&self, cell: &Cell) -> DistillConfig {
        DistillConfig {
            mode: cell.mode,
            teacher_set: cell.teachers,
            resolution: cell.resolution,
            seed: cell.seed,
            ..self.base.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridRow {
    pub cell: Cell,
    pub report: EvalReport,
    pub train: TrainReport,
}

/// Trains and evaluates every cell. Cells that regress require a teacher;
/// classification-only cells are paired with teacher set O only. Teacher
/// features, adapters and pretrained students are shared between cells
/// where their inputs coincide.
pub fn run_ablation_grid(ds: &Dataset, teachers: &[&TeacherHandle], cfg: &GridConfig) -> Result<Vec<GridRow>> {
    let mut features: HashMap<TeacherSet, TeacherFeatures> = HashMap::new();
    let mut bridges: HashMap<(TeacherSet, u64), Bridge> = HashMap::new();
    let mut pretrained: HashMap<(usize, usize, u64), Network<f32>> = HashMap::new();
    let mut train_sets: HashMap<usize, LabeledSet> = HashMap::new();
    let mut rows = Vec::new();
    for cell in cfg.cells() {
        let dc = cfg.cell_config(&cell);
        dc.validate()?;
        if let Entry::Vacant(e) = train_sets.entry(cell.resolution) {
            e.insert(lr_set(ds, cell.resolution, Split::Public, Some(Part::Train), false)?);
        }
        let train = &train_sets[&cell.resolution];
        let feats = if cell.mode.regresses() {
            if let Entry::Vacant(e) = features.entry(cell.teachers) {
                e.insert(TeacherFeatures::compute(ds, teachers, cell.teachers)?);
            }
            Some(&features[&cell.teachers])
        } else {
            None
        };
        let bridge = match feats {
            Some(f) if cell.mode.adapted() => {
                let key = (cell.teachers, cell.seed);
                if let Entry::Vacant(e) = bridges.entry(key) {
                    e.insert(adapt(ds, f, &dc, cfg.finetune_epochs)?);
                }
                Some(&bridges[&key])
            }
            _ => None,
        };
        let mimic = mimic_width(cell.mode, feats)?;
        let key = (cell.resolution, mimic, cell.seed);
        let mut student = match pretrained.get(&key) {
            Some(s) => s.clone(),
            None => {
                let (s, _) = pretrained_student(ds, train, &dc, mimic)?;
                pretrained.insert(key, s.clone());
                s
            }
        };
        let targets = match feats {
            Some(f) => regression_targets(train, f, bridge, cell.mode)?,
            None => None,
        };
        let report = distill_student(&mut student, train, targets.as_ref(), &dc)?;
        let (eval, _) = evaluate(ds, &student, cell.resolution, &cell.name(), cell.seed, &cfg.eval)?;
        rows.push(GridRow { cell, report: eval, train: report });
    }
    Ok(rows)
}
