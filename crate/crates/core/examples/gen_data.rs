//! Generates a small synthetic dataset, prints its partition and writes it
//! to disk with a manifest.
//!
//! cargo run --release --example gen_data -- /tmp/faces

use std::path::PathBuf;

use bridge_distill::datagen::{verification_pairs, Dataset, DatasetConfig, Part, Split, MANIFEST};

fn main() -> bridge_distill::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bd_faces"));
    let cfg = DatasetConfig { identities: 24, samples_per_identity: 12, ..DatasetConfig::default() };
    let ds = Dataset::generate(&cfg)?;

    for split in [Split::Private, Split::Public, Split::Target] {
        println!(
            "{split:>8}: {:2} identities, {:3} train / {:3} test HR images",
            ds.classes(split).len(),
            ds.hr_samples(split, Some(Part::Train)).len(),
            ds.hr_samples(split, Some(Part::Test)).len()
        );
    }
    for (res, samples) in &ds.lr {
        println!("{res:>3}x{res:<3}: {} degraded copies", samples.len());
    }

    let first = &ds.lr[&16][0];
    println!("lineage of the first 16x16 copy: {}", first.lineage.as_ref().expect("degraded"));

    let probes = ds.lr_probes(16, Split::Target, None)?;
    let ids: Vec<usize> = probes.iter().map(|s| s.identity).collect();
    let pairs = verification_pairs(&ids, 50, 50, 0)?;
    println!("{} verification pairs over {} target probes", pairs.len(), probes.len());

    ds.write(&out)?;
    let again = Dataset::read(&out)?;
    assert_eq!(again, ds);
    println!("wrote {} and read it back unchanged", out.join(MANIFEST).display());
    Ok(())
}
