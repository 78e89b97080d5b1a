use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{DatasetConfig, DegradeConfig};
use crate::distill::{DistillConfig, Mode, TeacherSet};
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, GridConfig};
use crate::pipeline::TeacherConfig;

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.name", "default", "run directory name under run.out"),
    ("run.out", "out", "root output directory"),
    ("run.seed", "0", "seed of the adapter, the student and the grid cell (--seed overrides it)"),
    ("dataset.seed", "0", "seed of the synthetic identities, splits and degradations"),
    ("dataset.identities", "60", "total synthetic identities"),
    ("dataset.private_fraction", "0.3333333333333333", "share of identities used to pretrain teachers"),
    ("dataset.public_fraction", "0.5", "share of identities used for adaptation and students"),
    ("dataset.target_fraction", "0.16666666666666666", "share of identities held out for evaluation"),
    ("dataset.samples_per_identity", "40", "high-resolution samples per identity"),
    ("dataset.train_fraction", "0.8", "leading share of each identity's samples used for training"),
    ("dataset.hr", "64", "high-resolution image size"),
    ("dataset.resolutions", "32,16", "low resolutions to materialize"),
    ("dataset.degrade_count", "4", "degraded copies per high-resolution image"),
    ("dataset.jitter_px", "2", "maximum translation before downsampling, in high-resolution pixels"),
    ("dataset.blur_min", "0", "smallest Gaussian blur sigma, in output pixels"),
    ("dataset.blur_max", "0.8", "largest Gaussian blur sigma, in output pixels"),
    ("dataset.gain_min", "0.75", "smallest illumination gain"),
    ("dataset.gain_max", "1.25", "largest illumination gain"),
    ("teacher.seed", "0", "seed of teacher initialization and batch order"),
    ("teacher.feature_dim", "256", "teacher feature width"),
    ("teacher.scale", "1", "channel multiplier of teacher V (teacher C uses half)"),
    ("teacher.lr", "0.01", "teacher pretraining learning rate"),
    ("teacher.epochs", "6", "teacher pretraining epochs"),
    ("teacher.batch_size", "32", "teacher pretraining batch size"),
    ("teacher.finetune_epochs", "30", "epochs of the public head on frozen teacher features"),
    ("distill.lambda", "1", "weight of the softened-target term when training the adapter"),
    ("distill.temperature", "4", "softening temperature"),
    ("distill.literal_temperature", "false", "divide the teacher's softmax output by the temperature instead of its logits"),
    ("distill.mode", "sc", "student supervision: c, s, dc or sc"),
    ("distill.teacher_set", "V", "teachers: O (none), V, C or E (both)"),
    ("distill.resolution", "16", "student input resolution"),
    ("distill.lr", "0.001", "student learning rate"),
    ("distill.adapter_lr", "0.01", "learning rate of the fine-tuned head and the adapter"),
    ("distill.batch_size", "32", "minibatch size of every distillation stage"),
    ("distill.epochs_adapter", "30", "adapter epochs"),
    ("distill.epochs_pretrain", "3", "classification-only student warm-up epochs"),
    ("distill.epochs_main", "5", "main student epochs"),
    ("eval.seed", "0", "seed of the verification pairs and the identity head refit"),
    ("eval.pos_pairs", "100", "same-identity verification pairs"),
    ("eval.neg_pairs", "100", "different-identity verification pairs"),
    ("eval.ks", "1,5", "top-k errors to report"),
    ("eval.head_epochs", "20", "epochs of the identity head refit on the gallery"),
    ("eval.head_lr", "0.05", "learning rate of the identity head refit"),
    ("grid.modes", "c,s,dc,sc", "grid supervision modes"),
    ("grid.teachers", "O,V,C,E", "grid teacher sets"),
    ("grid.resolutions", "16,32", "grid student resolutions"),
    ("grid.seeds", "0,1,2,3,4", "grid seeds"),
    ("bench.duration_s", "5", "seconds of timed inference per model"),
    ("bench.batch", "32", "inference batch size"),
];

/// Full run configuration: every stage's settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub name: String,
    pub out: PathBuf,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub teacher: TeacherConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
    pub grid_modes: Vec<Mode>,
    pub grid_teachers: Vec<TeacherSet>,
    pub grid_resolutions: Vec<usize>,
    pub grid_seeds: Vec<u64>,
    pub bench_duration_s: f64,
    pub bench_batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_map(&BTreeMap::new()).expect("built-in defaults parse")
    }
}

fn get<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = values
        .get(key)
        .map(String::as_str)
        .or_else(|| KEYS.iter().find(|k| k.0 == key).map(|k| k.1))
        .unwrap_or_else(|| panic!("{key} missing from the key table"));
    raw.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn list<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>> {
    let raw: String = get(values, key)?;
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse element {s:?}"))))
        .collect()
}

impl RunConfig {
    /// Parses `section.key = value` lines. Blank lines and `#` comments are
    /// skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            let k = k.trim();
            if !KEYS.iter().any(|e| e.0 == k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?} (see --help for the list)", n + 1)));
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: key {k:?} set twice", n + 1)));
            }
        }
        Self::from_map(&values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_map(v: &BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = get(v, "run.seed")?;
        let dataset = DatasetConfig {
            identities: get(v, "dataset.identities")?,
            fractions: [
                get(v, "dataset.private_fraction")?,
                get(v, "dataset.public_fraction")?,
                get(v, "dataset.target_fraction")?,
            ],
            samples_per_identity: get(v, "dataset.samples_per_identity")?,
            train_fraction: get(v, "dataset.train_fraction")?,
            hr: get(v, "dataset.hr")?,
            resolutions: list(v, "dataset.resolutions")?,
            degrade: DegradeConfig {
                count: get(v, "dataset.degrade_count")?,
                jitter_px: get(v, "dataset.jitter_px")?,
                blur_sigma: (get(v, "dataset.blur_min")?, get(v, "dataset.blur_max")?),
                gain: (get(v, "dataset.gain_min")?, get(v, "dataset.gain_max")?),
                resolution: DegradeConfig::default().resolution,
            },
            seed: get(v, "dataset.seed")?,
        };
        dataset.degrade.validate()?;
        let teacher = TeacherConfig {
            feature_dim: get(v, "teacher.feature_dim")?,
            scale: get(v, "teacher.scale")?,
            lr: get(v, "teacher.lr")?,
            epochs: get(v, "teacher.epochs")?,
            batch_size: get(v, "teacher.batch_size")?,
            finetune_epochs: get(v, "teacher.finetune_epochs")?,
            seed: get(v, "teacher.seed")?,
        };
        let distill = DistillConfig {
            lambda: get(v, "distill.lambda")?,
            temperature: get(v, "distill.temperature")?,
            literal_temperature: get(v, "distill.literal_temperature")?,
            mode: get(v, "distill.mode")?,
            teacher_set: get(v, "distill.teacher_set")?,
            resolution: get(v, "distill.resolution")?,
            lr: get(v, "distill.lr")?,
            adapter_lr: get(v, "distill.adapter_lr")?,
            batch_size: get(v, "distill.batch_size")?,
            epochs_adapter: get(v, "distill.epochs_adapter")?,
            epochs_pretrain: get(v, "distill.epochs_pretrain")?,
            epochs_main: get(v, "distill.epochs_main")?,
            seed,
        };
        distill.validate()?;
        let eval = EvalConfig {
            pos_pairs: get(v, "eval.pos_pairs")?,
            neg_pairs: get(v, "eval.neg_pairs")?,
            ks: list(v, "eval.ks")?,
            head_epochs: get(v, "eval.head_epochs")?,
            head_lr: get(v, "eval.head_lr")?,
            seed: get(v, "eval.seed")?,
        };
        Ok(Self {
            name: get(v, "run.name")?,
            out: PathBuf::from(get::<String>(v, "run.out")?),
            seed,
            dataset,
            teacher,
            distill,
            eval,
            grid_modes: list(v, "grid.modes")?,
            grid_teachers: list(v, "grid.teachers")?,
            grid_resolutions: list(v, "grid.resolutions")?,
            grid_seeds: list(v, "grid.seeds")?,
            bench_duration_s: get(v, "bench.duration_s")?,
            bench_batch: get(v, "bench.batch")?,
        })
    }

    /// Replaces the run seed; data, teachers and pairs keep their own.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.distill.seed = seed;
        self
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.name)
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            modes: self.grid_modes.clone(),
            teachers: self.grid_teachers.clone(),
            resolutions: self.grid_resolutions.clone(),
            seeds: self.grid_seeds.clone(),
            base: self.distill.clone(),
            finetune_epochs: self.teacher.finetune_epochs,
            eval: self.eval.clone(),
        }
    }
}

/// The key reference printed by `--help`.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (`section.key = value`, one per line, `#` starts a comment):\n");
    for (k, d, doc) in KEYS {
        writeln!(s, "  {k:<30} default {d:<20} {doc}").expect("writing to a string");
    }
    s
}
