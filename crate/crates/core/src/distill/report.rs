use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean classification loss over the epoch's batches.
    pub class_loss: f64,
    /// Mean distillation or regression loss.
    pub aux_loss: f64,
    pub total: f64,
    pub acc: f64,
}

impl EpochRecord {
    pub fn line(&self) -> String {
        format!(
            "epoch={} C={:.9} D_or_R={:.9} total={:.9} acc={:.6}",
            self.epoch, self.class_loss, self.aux_loss, self.total, self.acc
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let mut rec = EpochRecord { epoch: 0, class_loss: 0.0, aux_loss: 0.0, total: 0.0, acc: 0.0 };
        let mut seen = 0;
        for kv in line.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("bad record field {kv:?}")))?;
            let f = || v.parse::<f64>().map_err(|_| invalid(format!("bad value in {kv:?}")));
            match k {
                "epoch" => rec.epoch = v.parse().map_err(|_| invalid(format!("bad epoch {v:?}")))?,
                "C" => rec.class_loss = f()?,
                "D_or_R" => rec.aux_loss = f()?,
                "total" => rec.total = f()?,
                "acc" => rec.acc = f()?,
                _ => return Err(invalid(format!("unknown record field {k:?}"))),
            }
            seen += 1;
        }
        if seen != 5 {
            return Err(invalid(format!("record needs 5 fields: {line:?}")));
        }
        Ok(rec)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub wall_clock_s: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// One line per epoch; wall-clock time is left out so reruns compare
    /// byte for byte.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            writeln!(s, "{}", r.line()).expect("writing to a string");
        }
        s
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Appends `other`, renumbering its epochs to follow on.
    pub fn extend(&mut self, other: TrainReport) {
        let offset = self.records.len();
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.epoch += offset;
            r
        }));
        self.wall_clock_s += other.wall_clock_s;
        if other.checkpoint.is_some() {
            self.checkpoint = other.checkpoint;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let r = EpochRecord { epoch: 3, class_loss: 1.25, aux_loss: 0.5, total: 1.75, acc: 0.4 };
        assert_eq!(r.line(), "epoch=3 C=1.250000000 D_or_R=0.500000000 total=1.750000000 acc=0.400000");
        assert_eq!(EpochRecord::parse(&r.line()).unwrap(), r);
        assert!(EpochRecord::parse("epoch=1 C=2").is_err());
    }
}
