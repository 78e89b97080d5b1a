use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::degrade::{degrade, DegradeConfig};
use super::identity::{render_hr, synth_identities};
use super::sample::{FaceSample, Lineage, Split};
use super::splits::{make_splits, Splits};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub identities: usize,
    /// Private, public and target fractions of the identities.
    pub fractions: [f64; 3],
    pub samples_per_identity: usize,
    /// Leading fraction of each identity's samples used for training.
    pub train_fraction: f64,
    pub hr: usize,
    /// Low resolutions materialized alongside the high-resolution images.
    pub resolutions: Vec<usize>,
    /// Degradation settings; `resolution` is overridden per entry of
    /// `resolutions`.
    pub degrade: DegradeConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            identities: 60,
            fractions: [1.0 / 3.0, 0.5, 1.0 / 6.0],
            samples_per_identity: 40,
            train_fraction: 0.8,
            hr: 64,
            resolutions: vec![32, 16],
            degrade: DegradeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Test,
}

/// High-resolution samples plus their degraded sets at each materialized
/// resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub hr_size: usize,
    pub splits: Splits,
    /// Samples per identity with index below this are training samples.
    pub n_train: usize,
    pub hr: Vec<FaceSample>,
    pub lr: BTreeMap<usize, Vec<FaceSample>>,
}

impl Dataset {
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        if cfg.samples_per_identity < 2 || !(0.0..1.0).contains(&cfg.train_fraction) {
            return Err(invalid("need at least two samples per identity and a train fraction in [0, 1)"));
        }
        let n_train = ((cfg.train_fraction * cfg.samples_per_identity as f64).round() as usize)
            .clamp(1, cfg.samples_per_identity - 1);
        let identities = synth_identities(cfg.identities, cfg.seed);
        let ids: Vec<usize> = identities.iter().map(|i| i.id).collect();
        let splits = make_splits(&ids, cfg.fractions, cfg.seed)?;
        let split_of = |id: usize| {
            if splits.private.binary_search(&id).is_ok() {
                Split::Private
            } else if splits.public.binary_search(&id).is_ok() {
                Split::Public
            } else {
                Split::Target
            }
        };
        let mut hr = Vec::with_capacity(cfg.identities * cfg.samples_per_identity);
        for ident in &identities {
            for index in 0..cfg.samples_per_identity {
                hr.push(render_hr(ident, cfg.hr, cfg.seed, index, split_of(ident.id))?);
            }
        }
        let mut lr = BTreeMap::new();
        for &res in &cfg.resolutions {
            let dc = DegradeConfig { resolution: res, ..cfg.degrade.clone() };
            let mut out = Vec::with_capacity(hr.len() * dc.count);
            for s in &hr {
                out.extend(degrade(s, &dc, cfg.seed)?);
            }
            lr.insert(res, out);
        }
        Ok(Self { hr_size: cfg.hr, splits, n_train, hr, lr })
    }

    pub fn part_of(&self, s: &FaceSample) -> Part {
        if s.index < self.n_train {
            Part::Train
        } else {
            Part::Test
        }
    }

    /// Identities of a split in class order.
    pub fn classes(&self, split: Split) -> &[usize] {
        match split {
            Split::Private => &self.splits.private,
            Split::Public => &self.splits.public,
            Split::Target => &self.splits.target,
        }
    }

    /// Class index of `identity` within `split`.
    pub fn class_of(&self, split: Split, identity: usize) -> Result<usize> {
        self.classes(split)
            .binary_search(&identity)
            .map_err(|_| invalid(format!("identity {identity} is not in the {split} split")))
    }

    pub fn hr_samples(&self, split: Split, part: Option<Part>) -> Vec<&FaceSample> {
        self.hr.iter().filter(|s| s.split == split && part.is_none_or(|p| self.part_of(s) == p)).collect()
    }

    /// Every degraded copy at `res` for the given split and part.
    pub fn lr_samples(&self, res: usize, split: Split, part: Option<Part>) -> Result<Vec<&FaceSample>> {
        let all = self.lr.get(&res).ok_or_else(|| {
            invalid(format!(
                "resolution {res} was not generated; available: {:?}",
                self.lr.keys().collect::<Vec<_>>()
            ))
        })?;
        Ok(all.iter().filter(|s| s.split == split && part.is_none_or(|p| self.part_of(s) == p)).collect())
    }

    /// One degraded copy per source sample (the first of each set).
    pub fn lr_probes(&self, res: usize, split: Split, part: Option<Part>) -> Result<Vec<&FaceSample>> {
        Ok(self
            .lr_samples(res, split, part)?
            .into_iter()
            .filter(|s| s.lineage.as_ref().is_none_or(|l| l.copy == 0))
            .collect())
    }

    /// Writes the manifest and one raw little-endian f32 file per image.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut manifest = String::new();
        let all = self.hr.iter().chain(self.lr.values().flatten());
        for s in all {
            let copy = s.lineage.as_ref().map(|l| l.copy);
            let rel = format!(
                "images/{}/r{}/{}_{}{}.f32",
                s.split,
                s.resolution,
                s.identity,
                s.index,
                copy.map(|c| format!("_{c}")).unwrap_or_default()
            );
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, s.image.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
            let part = match self.part_of(s) {
                Part::Train => "train",
                Part::Test => "test",
            };
            let lineage = s.lineage.as_ref().map(|l| l.to_string()).unwrap_or_else(|| "-".into());
            manifest.push_str(&format!(
                "id={} idx={} split={} part={part} res={} path={rel} lineage={lineage}\n",
                s.identity, s.index, s.split, s.resolution
            ));
        }
        let mpath = dir.join(MANIFEST);
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: mpath.clone(),
                hint: "run gen-data first".into(),
            },
            _ => Error::io(&mpath, e),
        })?;
        let mut hr = Vec::new();
        let mut lr: BTreeMap<usize, Vec<FaceSample>> = BTreeMap::new();
        let mut by_split: BTreeMap<Split, BTreeSet<usize>> = BTreeMap::new();
        let mut train_indices = BTreeSet::new();
        let mut test_indices = BTreeSet::new();
        let mut hr_size = 0;
        for (lineno, line) in text.lines().enumerate() {
            let bad = |what: &str| invalid(format!("{}:{}: {what}", mpath.display(), lineno + 1));
            let fields: BTreeMap<&str, &str> = line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
            let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing {k}")));
            let num = |k: &str| get(k)?.parse::<usize>().map_err(|_| bad(&format!("bad {k}")));
            let (identity, index, res) = (num("id")?, num("idx")?, num("res")?);
            let split: Split = get("split")?.parse()?;
            let path = dir.join(get("path")?);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != res * res * 4 {
                return Err(bad("image size does not match resolution"));
            }
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let lineage = match get("lineage")? {
                "-" => None,
                l => Some(parse_lineage(l).ok_or_else(|| bad("bad lineage"))?),
            };
            match get("part")? {
                "train" => train_indices.insert(index),
                "test" => test_indices.insert(index),
                _ => return Err(bad("bad part")),
            };
            by_split.entry(split).or_default().insert(identity);
            let sample = FaceSample {
                image: Tensor::new(vec![1, res, res], data)?,
                identity,
                index,
                split,
                resolution: res,
                lineage,
            };
            if sample.lineage.is_none() {
                hr_size = res;
                hr.push(sample);
            } else {
                lr.entry(res).or_default().push(sample);
            }
        }
        let n_train = train_indices.len();
        if train_indices.iter().any(|&i| i >= n_train) || test_indices.iter().any(|&i| i < n_train) {
            return Err(invalid("manifest train/test parts are not a prefix split"));
        }
        let ids = |s: Split| by_split.get(&s).map(|x| x.iter().copied().collect()).unwrap_or_default();
        let splits = Splits { private: ids(Split::Private), public: ids(Split::Public), target: ids(Split::Target) };
        splits.check_disjoint()?;
        Ok(Self { hr_size, splits, n_train, hr, lr })
    }
}

fn parse_lineage(s: &str) -> Option<Lineage> {
    let f: BTreeMap<&str, &str> = s.split(':').filter_map(|kv| kv.split_once('=')).collect();
    let num = |k: &str| f.get(k)?.parse::<f64>().ok();
    Some(Lineage {
        source: f.get("src")?.parse().ok()?,
        copy: f.get("copy")?.parse().ok()?,
        jitter: (num("dx")?, num("dy")?),
        blur_sigma: num("blur")?,
        gain: num("gain")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            identities: 6,
            fractions: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            samples_per_identity: 5,
            resolutions: vec![16],
            degrade: DegradeConfig { count: 2, ..DegradeConfig::default() },
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn generation_counts_and_disjointness() {
        let d = Dataset::generate(&small()).unwrap();
        assert_eq!(d.hr.len(), 30);
        assert_eq!(d.lr[&16].len(), 60);
        assert_eq!(d.n_train, 4);
        d.splits.check_disjoint().unwrap();
        assert_eq!(d.hr_samples(Split::Public, Some(Part::Train)).len(), 8);
        assert_eq!(d.lr_probes(16, Split::Target, None).unwrap().len(), 10);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::generate(&small()).unwrap();
        d.write(dir.path()).unwrap();
        let back = Dataset::read(dir.path()).unwrap();
        assert_eq!(back.splits, d.splits);
        assert_eq!(back.n_train, d.n_train);
        assert_eq!(back.hr, d.hr);
        assert_eq!(back.lr[&16].len(), d.lr[&16].len());
        for (a, b) in back.lr[&16].iter().zip(&d.lr[&16]) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.lineage.as_ref().unwrap().copy, b.lineage.as_ref().unwrap().copy);
        }
    }

    #[test]
    fn missing_manifest_names_the_artifact() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::read(dir.path()), Err(Error::MissingArtifact { .. })));
    }
}
