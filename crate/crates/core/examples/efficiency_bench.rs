//! Parameter, MAC and memory counts of the student at every supported
//! resolution and of the teacher, plus measured single-thread throughput.

use std::time::Duration;

use bridge_distill::bench::{count_macs, memory_footprint, CostReport};
use bridge_distill::zoo::{build_student, build_toy_teacher, STUDENT_RESOLUTIONS};

fn main() -> bridge_distill::Result<()> {
    println!("{:>4} {:>9} {:>11} {:>12}", "p", "params", "MACs", "peak act B");
    for p in STUDENT_RESOLUTIONS {
        let s = build_student(p, 30, 0)?;
        let (_, act) = memory_footprint(s.spec(), p, 1, 4)?;
        println!("{p:>4} {:>9} {:>11} {act:>12}", s.param_count(), count_macs(s.spec(), p)?);
    }
    let d = Duration::from_secs(5);
    let student = CostReport::measure("student-p16", &build_student(16, 30, 0)?, 16, 32, d)?;
    let teacher = CostReport::measure("teacher", &build_toy_teacher(20, 256, 0)?, 64, 32, d)?;
    println!("\n{student}\n{teacher}");
    println!(
        "speedup {:.1}x on {}",
        student.throughput.faces_per_sec / teacher.throughput.faces_per_sec,
        student.throughput.hardware
    );
    Ok(())
}
