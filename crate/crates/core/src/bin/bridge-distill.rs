use std::path::PathBuf;
use std::process::ExitCode;

use bridge_distill::cli::{self, keys_help, Overrides, RunConfig};
use bridge_distill::distill::{Mode, TeacherSet};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bridge-distill", version, about = "Bridge distillation for low-resolution face-analog recognition")]
#[command(after_long_help = keys_help())]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Config file of `section.key = value` lines (see --help for the keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed: adapter, student and cell seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Student supervision: c, s, dc or sc.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Teacher set: O, V, C or E.
    #[arg(long, global = true)]
    teacher: Option<TeacherSet>,
    /// Student input resolution.
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset.
    GenData,
    /// Pretrain teacher V, C or both (E) on the private split.
    TrainTeacher,
    /// Fine-tune the public head and train the adapter.
    Adapt {
        /// Also report the four adaptation variants.
        #[arg(long)]
        ablation: bool,
    },
    /// Pretrain and distill a student.
    Distill,
    /// Verification and identification of a trained student.
    Eval,
    /// Analytic costs and throughput of the student and the teacher.
    Bench,
    /// Adapt, distill and evaluate every grid cell in child processes.
    Grid {
        /// Child processes run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(args: Args) -> bridge_distill::Result<String> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = Overrides { seed: args.seed, mode: args.mode, teachers: args.teacher, resolution: args.resolution }
        .apply(cfg)?;
    match args.cmd {
        Cmd::GenData => cli::cmd_gen_data(&cfg),
        Cmd::TrainTeacher => cli::cmd_train_teacher(&cfg, args.teacher.unwrap_or(TeacherSet::V)),
        Cmd::Adapt { ablation } => cli::cmd_adapt(&cfg, ablation),
        Cmd::Distill => cli::cmd_distill(&cfg),
        Cmd::Eval => cli::cmd_eval(&cfg).map(|r| r.1),
        Cmd::Bench => cli::cmd_bench(&cfg),
        Cmd::Grid { jobs } => {
            let exe = std::env::current_exe().map_err(|e| bridge_distill::Error::InvalidArgument(e.to_string()))?;
            cli::cmd_grid(&cfg, args.config.as_deref(), &exe, jobs)
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(out) => {
            println!("{}", out.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
