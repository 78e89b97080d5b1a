//! Stage commands over an output directory laid out as
//! `<out>/<run>/{data,checkpoints,reports,logs}`, with one
//! `S-<p>-<mode>-<teachers>-seed<n>` directory per trained student.

mod config;

pub use config::{keys_help, RunConfig, KEYS};

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Duration;

use crate::bench::CostReport;
use crate::datagen::{Dataset, Part, Split};
use crate::distill::{DistillConfig, Mode, TeacherSet, TrainReport};
use crate::error::{invalid, Error, Result};
use crate::eval::{evaluate, Cell, EvalReport};
use crate::pipeline::{
    adapt, adaptation_ablation, distill_student, lr_set, mimic_width, pretrained_student, regression_targets,
    teacher_private_accuracy, teacher_spec_for, train_teacher, Bridge, TeacherFeatures, TeacherKind,
};
use crate::zoo::checkpoint::{meta, read};
use crate::zoo::{adapter_spec, build_student_with_mimic, head_spec, student_spec, Network, TeacherHandle};

/// Command-line settings that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub teachers: Option<TeacherSet>,
    pub resolution: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(m) = self.mode {
            cfg.distill.mode = m;
        }
        if let Some(t) = self.teachers {
            cfg.distill.teacher_set = t;
        }
        if let Some(p) = self.resolution {
            cfg.distill.resolution = p;
        }
        cfg.distill.validate()?;
        Ok(cfg)
    }
}

/// Paths of every artifact of a run.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { root: cfg.run_dir() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn teacher(&self, kind: TeacherKind) -> PathBuf {
        self.checkpoints().join(format!("teacher_{}.bdck", kind.name()))
    }

    pub fn finetuned_head(&self, set: TeacherSet, seed: u64) -> PathBuf {
        self.checkpoints().join(format!("head_{set}-seed{seed}.bdck"))
    }

    pub fn adapter(&self, set: TeacherSet, seed: u64) -> PathBuf {
        self.checkpoints().join(format!("adapter_{set}-seed{seed}.bdck"))
    }

    pub fn pretrained(&self, res: usize, mimic: usize, seed: u64) -> PathBuf {
        self.checkpoints().join(format!("pretrain_p{res}_m{mimic}-seed{seed}.bdck"))
    }

    pub fn cell(&self, cell: &Cell) -> PathBuf {
        self.root.join(cell.dir_name())
    }

    pub fn student(&self, cell: &Cell) -> PathBuf {
        self.cell(cell).join("checkpoints").join("student.bdck")
    }
}

fn cell_of(d: &DistillConfig) -> Cell {
    Cell { resolution: d.resolution, mode: d.mode, teachers: d.teacher_set, seed: d.seed }
}

/// Writes through a temporary file and a rename, so concurrent writers of
/// the same artifact never expose a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn save_net(net: &Network<f32>, path: &Path, meta: &[(&str, f64)]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    net.save(&tmp, meta)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_net(mut net: Network<f32>, path: &Path) -> Result<Network<f32>> {
    net.load(path)?;
    Ok(net)
}

fn write_log(path: &Path, report: &TrainReport) -> Result<()> {
    write_atomic(path, report.to_lines().as_bytes())
}

fn read_log(path: &Path) -> Result<TrainReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = text.lines().map(crate::distill::EpochRecord::parse).collect::<Result<_>>()?;
    Ok(TrainReport { records, ..Default::default() })
}

pub fn load_dataset(layout: &Layout) -> Result<Dataset> {
    Dataset::read(&layout.data())
}

/// Generates the dataset into `<run>/data`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<String> {
    let layout = Layout::new(cfg);
    let ds = Dataset::generate(&cfg.dataset)?;
    ds.write(&layout.data())?;
    Ok(format!(
        "gen-data: {} high-resolution and {} low-resolution images in {}",
        ds.hr.len(),
        ds.lr.values().map(Vec::len).sum::<usize>(),
        layout.data().display()
    ))
}

fn kinds(set: TeacherSet) -> Result<Vec<TeacherKind>> {
    let all = [TeacherKind::V, TeacherKind::C];
    match set {
        TeacherSet::O => Err(invalid("teacher set O has nothing to train; use V, C or E")),
        _ => Ok(set.members().iter().map(|&i| all[i]).collect()),
    }
}

/// Pretrains the teachers of `set` (both for E) on the private split.
pub fn cmd_train_teacher(cfg: &RunConfig, set: TeacherSet) -> Result<String> {
    let layout = Layout::new(cfg);
    let ds = load_dataset(&layout)?;
    let mut out = Vec::new();
    for kind in kinds(set)? {
        let (teacher, report) = train_teacher(&ds, &cfg.teacher, kind)?;
        save_net(teacher.backbone(), &layout.teacher(kind), &[])?;
        write_log(&layout.logs().join(format!("teacher_{}.log", kind.name())), &report)?;
        let acc = teacher_private_accuracy(&ds, &teacher)?;
        let line = format!(
            "teacher={} params={} private_test_acc={acc:.6} chance={:.6}",
            kind.name(),
            teacher.backbone().param_count(),
            1.0 / ds.classes(Split::Private).len() as f64
        );
        write_atomic(&layout.reports().join(format!("teacher_{}.txt", kind.name())), format!("{line}\n").as_bytes())?;
        out.push(line);
    }
    Ok(out.join("\n"))
}

pub fn load_teacher(cfg: &RunConfig, ds: &Dataset, kind: TeacherKind) -> Result<TeacherHandle> {
    let path = Layout::new(cfg).teacher(kind);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            hint: format!("run `train-teacher --teacher {}` first", kind.name()),
        });
    }
    let net = load_net(Network::new(teacher_spec_for(ds, &cfg.teacher, kind)?, 0)?, &path)?;
    Ok(TeacherHandle::new(net, ds.classes(Split::Private).to_vec()))
}

/// Teachers in (V, C) order; only the members of `set` are loaded, so the
/// other slot may be a placeholder that is never read.
fn load_teachers(cfg: &RunConfig, ds: &Dataset, set: TeacherSet) -> Result<Vec<TeacherHandle>> {
    let needed = kinds(set)?;
    let v = load_teacher(cfg, ds, if needed.contains(&TeacherKind::V) { TeacherKind::V } else { TeacherKind::C })?;
    if needed.contains(&TeacherKind::C) && needed.contains(&TeacherKind::V) {
        Ok(vec![v, load_teacher(cfg, ds, TeacherKind::C)?])
    } else {
        Ok(vec![v.clone(), v])
    }
}

fn features(cfg: &RunConfig, ds: &Dataset, set: TeacherSet) -> Result<(Vec<TeacherHandle>, TeacherFeatures)> {
    let teachers = load_teachers(cfg, ds, set)?;
    let refs: Vec<&TeacherHandle> = teachers.iter().collect();
    let feats = TeacherFeatures::compute(ds, &refs, set)?;
    Ok((teachers, feats))
}

/// Fine-tunes the public head and trains the adapter for the configured
/// teacher set and seed; with `ablation`, also reports the four adaptation
/// variants.
pub fn cmd_adapt(cfg: &RunConfig, ablation: bool) -> Result<String> {
    let layout = Layout::new(cfg);
    let ds = load_dataset(&layout)?;
    let set = cfg.distill.teacher_set;
    let seed = cfg.distill.seed;
    let (teachers, feats) = features(cfg, &ds, set)?;
    let bridge = adapt(&ds, &feats, &cfg.distill, cfg.teacher.finetune_epochs)?;
    save_net(&bridge.finetuned, &layout.finetuned_head(set, seed), &[])?;
    save_net(&bridge.adapter, &layout.adapter(set, seed), &[])?;
    let tag = format!("{set}-seed{seed}");
    write_log(&layout.logs().join(format!("head_{tag}.log")), &bridge.finetune_report)?;
    write_log(&layout.logs().join(format!("adapter_{tag}.log")), &bridge.adapter_report)?;
    let last = bridge.adapter_report.last().map(|r| r.line()).unwrap_or_default();
    let mut out = format!("adapt: teachers={set} seed={seed} {last}");
    if ablation {
        let refs: Vec<&TeacherHandle> = teachers.iter().collect();
        let cases = adaptation_ablation(&ds, &refs, &feats, &cfg.distill, cfg.teacher.finetune_epochs)?;
        let line = format!("teachers={set} {}", cases.line(seed));
        write_atomic(&layout.reports().join(format!("ablation_{tag}.txt")), format!("{line}\n").as_bytes())?;
        write!(out, "\nablation: {line}").expect("writing to a string");
    }
    Ok(out)
}

fn load_bridge(cfg: &RunConfig, ds: &Dataset, feats: &TeacherFeatures) -> Result<Bridge> {
    let layout = Layout::new(cfg);
    let (set, seed) = (cfg.distill.teacher_set, cfg.distill.seed);
    let classes = ds.classes(Split::Public).len();
    let missing = |path: PathBuf| Error::MissingArtifact {
        path,
        hint: format!("mode {} needs `adapt --teacher {set} --seed {seed}` first", cfg.distill.mode),
    };
    let (hp, ap) = (layout.finetuned_head(set, seed), layout.adapter(set, seed));
    for p in [&hp, &ap] {
        if !p.exists() {
            return Err(missing(p.clone()));
        }
    }
    Ok(Bridge {
        set,
        finetuned: load_net(Network::new(head_spec("teacher_ft", feats.dim(), classes)?, 0)?, &hp)?,
        adapter: load_net(Network::new(adapter_spec(feats.dim(), classes)?, 0)?, &ap)?,
        finetune_report: TrainReport::default(),
        adapter_report: TrainReport::default(),
    })
}

/// Pretrains (or resumes from the pretrain checkpoint) and distills one
/// student.
pub fn cmd_distill(cfg: &RunConfig) -> Result<String> {
    let layout = Layout::new(cfg);
    let ds = load_dataset(&layout)?;
    let d = &cfg.distill;
    let cell = cell_of(d);
    let feats = if d.mode.regresses() { Some(features(cfg, &ds, d.teacher_set)?.1) } else { None };
    let bridge = match &feats {
        Some(f) if d.mode.adapted() => Some(load_bridge(cfg, &ds, f)?),
        _ => None,
    };
    let train = lr_set(&ds, d.resolution, Split::Public, Some(Part::Train), false)?;
    let mimic = mimic_width(d.mode, feats.as_ref())?;
    let pre_path = layout.pretrained(d.resolution, mimic, d.seed);
    let pre_log = layout.logs().join(format!("pretrain_p{}_m{mimic}-seed{}.log", d.resolution, d.seed));
    let (mut student, resumed) = if pre_path.exists() {
        let classes = ds.classes(Split::Public).len();
        let net = build_student_with_mimic(d.resolution, classes, mimic, 0)?;
        (load_net(net, &pre_path)?, true)
    } else {
        let (net, report) = pretrained_student(&ds, &train, d, mimic)?;
        save_net(&net, &pre_path, &[("mimic", mimic as f64)])?;
        write_log(&pre_log, &report)?;
        (net, false)
    };
    let targets = match &feats {
        Some(f) => regression_targets(&train, f, bridge.as_ref(), d.mode)?,
        None => None,
    };
    let report = distill_student(&mut student, &train, targets.as_ref(), d)?;
    let dir = layout.cell(&cell);
    save_net(
        &student,
        &layout.student(&cell),
        &[("mimic", mimic as f64), ("resolution", d.resolution as f64)],
    )?;
    let mut log = if pre_log.exists() { read_log(&pre_log)? } else { TrainReport::default() };
    log.extend(report);
    write_log(&dir.join("logs").join("train.log"), &log)?;
    let last = log.last().map(|r| r.line()).unwrap_or_default();
    Ok(format!(
        "distill: {}{} {last}",
        cell.dir_name(),
        if resumed { " (resumed from pretrain checkpoint)" } else { "" }
    ))
}

pub fn load_student(cfg: &RunConfig, ds: &Dataset, cell: &Cell) -> Result<Network<f32>> {
    let path = Layout::new(cfg).student(cell);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            hint: format!(
                "run `distill --mode {} --teacher {} --resolution {} --seed {}` first",
                cell.mode, cell.teachers, cell.resolution, cell.seed
            ),
        });
    }
    let entries = read(&path)?;
    let mimic = meta(&entries, "mimic").ok_or_else(|| Error::Checkpoint(format!("{}: no mimic width", path.display())))?;
    let mut net = build_student_with_mimic(cell.resolution, ds.classes(Split::Public).len(), mimic as usize, 0)?;
    net.load_entries(&entries)?;
    Ok(net)
}

/// Verification and identification of one student on the target split.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(EvalReport, String)> {
    let layout = Layout::new(cfg);
    let ds = load_dataset(&layout)?;
    let cell = cell_of(&cfg.distill);
    let student = load_student(cfg, &ds, &cell)?;
    let (report, v) = evaluate(&ds, &student, cell.resolution, &cell.name(), cell.seed, &cfg.eval)?;
    let reports = layout.cell(&cell).join("reports");
    write_atomic(&reports.join("eval.txt"), format!("{report}\n").as_bytes())?;
    write_atomic(&reports.join("roc.tsv"), v.roc.to_columns().as_bytes())?;
    let line = format!("eval: {report}");
    Ok((report, line))
}

/// Analytic costs and single-thread throughput of the student at the
/// configured resolution and of teacher V at the high resolution.
pub fn cmd_bench(cfg: &RunConfig) -> Result<String> {
    let layout = Layout::new(cfg);
    let p = cfg.distill.resolution;
    let duration = Duration::from_secs_f64(cfg.bench_duration_s);
    let classes = (cfg.dataset.identities as f64 * cfg.dataset.fractions[1]).round().max(1.0) as usize;
    let private = (cfg.dataset.identities as f64 * cfg.dataset.fractions[0]).round().max(1.0) as usize;
    let student = Network::<f32>::new(student_spec(p, classes, crate::zoo::MIMIC_DIM)?, 0)?;
    let teacher = Network::<f32>::new(
        crate::zoo::teacher_spec(private, cfg.teacher.feature_dim, cfg.dataset.hr, cfg.teacher.scale)?,
        0,
    )?;
    let s = CostReport::measure(&format!("student-p{p}"), &student, p, cfg.bench_batch, duration)?;
    let t = CostReport::measure("teacher-V", &teacher, cfg.dataset.hr, cfg.bench_batch, duration)?;
    let ratio = s.throughput.faces_per_sec / t.throughput.faces_per_sec;
    let text = format!(
        "{s}\n{t}\nstudent/teacher throughput ratio {ratio:.1}\n\n{}\n{}\nratio={ratio:.3}\n",
        s.line(),
        t.line()
    );
    write_atomic(&layout.reports().join(format!("bench_p{p}.txt")), text.as_bytes())?;
    Ok(text)
}

/// Runs the grid as child processes of `exe`, at most `jobs` at a time:
/// first one adapter per (teacher set, seed), then `distill` and `eval` per
/// cell. Writes `reports/grid.tsv` with one row per cell.
pub fn cmd_grid(cfg: &RunConfig, config_path: Option<&Path>, exe: &Path, jobs: usize) -> Result<String> {
    let layout = Layout::new(cfg);
    load_dataset(&layout)?;
    let grid = cfg.grid();
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(invalid("the grid has no valid (mode, teacher set) combination"));
    }
    for set in cells.iter().filter(|c| c.mode.regresses()).map(|c| c.teachers).collect::<BTreeSet<_>>() {
        for kind in kinds(set)? {
            if !layout.teacher(kind).exists() {
                return Err(Error::MissingArtifact {
                    path: layout.teacher(kind),
                    hint: format!("run `train-teacher --teacher {}` first", kind.name()),
                });
            }
        }
    }
    let base = |verb: &str, seed: u64| {
        let mut a = vec![verb.to_string(), "--seed".into(), seed.to_string()];
        if let Some(p) = config_path {
            a.extend(["--config".into(), p.display().to_string()]);
        }
        a
    };
    let adapters: BTreeSet<(TeacherSet, u64)> =
        cells.iter().filter(|c| c.mode.adapted()).map(|c| (c.teachers, c.seed)).collect();
    let adapt_jobs: Vec<Vec<Vec<String>>> = adapters
        .iter()
        .filter(|(t, s)| !(layout.adapter(*t, *s).exists() && layout.finetuned_head(*t, *s).exists()))
        .map(|(t, s)| {
            let mut a = base("adapt", *s);
            a.extend(["--teacher".into(), t.to_string()]);
            vec![a]
        })
        .collect();
    run_pool(exe, adapt_jobs, jobs)?;
    let cell_jobs = cells
        .iter()
        .map(|c| {
            ["distill", "eval"]
                .iter()
                .map(|verb| {
                    let mut a = base(verb, c.seed);
                    a.extend([
                        "--mode".into(),
                        c.mode.to_string(),
                        "--teacher".into(),
                        c.teachers.to_string(),
                        "--resolution".into(),
                        c.resolution.to_string(),
                    ]);
                    a
                })
                .collect()
        })
        .collect();
    run_pool(exe, cell_jobs, jobs)?;
    let mut table = String::from("cell\tmodel\tseed\tacc\tauc\ttpr@0.1\ttop1\ttop5\n");
    for c in &cells {
        let path = layout.cell(c).join("reports").join("eval.txt");
        let line = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let fields: Vec<&str> = line.split_whitespace().map(|kv| kv.split_once('=').map_or(kv, |x| x.1)).collect();
        writeln!(table, "{}\t{}", c.dir_name(), fields.join("\t")).expect("writing to a string");
    }
    write_atomic(&layout.reports().join("grid.tsv"), table.as_bytes())?;
    Ok(table)
}

/// Runs each job (a sequence of argument lists run in order) in child
/// processes, `jobs` at a time; fails on the first nonzero exit.
fn run_pool(exe: &Path, work: Vec<Vec<Vec<String>>>, jobs: usize) -> Result<()> {
    let queue = Mutex::new(work.into_iter().collect::<VecDeque<_>>());
    let failure: Mutex<Option<String>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                if failure.lock().expect("lock").is_some() {
                    return;
                }
                let Some(job) = queue.lock().expect("lock").pop_front() else { return };
                for args in job {
                    let result = Command::new(exe).args(&args).output();
                    let err = match result {
                        Ok(o) if o.status.success() => None,
                        Ok(o) => Some(format!(
                            "`{}` failed: {}",
                            args.join(" "),
                            String::from_utf8_lossy(&o.stderr).trim()
                        )),
                        Err(e) => Some(format!("cannot run {}: {e}", exe.display())),
                    };
                    if let Some(e) = err {
                        failure.lock().expect("lock").get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    match failure.into_inner().expect("lock") {
        Some(e) => Err(invalid(e)),
        None => Ok(()),
    }
}
