use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::seed::derive_seed;
use crate::error::{invalid, Error, Result};

/// Identity partition; the three lists are sorted and pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub private: Vec<usize>,
    pub public: Vec<usize>,
    pub target: Vec<usize>,
}

impl Splits {
    /// Fails if any identity appears in more than one split.
    pub fn check_disjoint(&self) -> Result<()> {
        disjoint(&self.private, &self.public, "private/public")?;
        disjoint(&self.private, &self.target, "private/target")?;
        disjoint(&self.public, &self.target, "public/target")
    }
}

pub fn disjoint(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    let set: HashSet<_> = a.iter().collect();
    let shared: Vec<_> = b.iter().filter(|x| set.contains(x)).collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::IdentityOverlap(format!("{what} share identities {shared:?}")))
    }
}

/// Shuffles `ids` and cuts them into private, public and target parts of
/// `round(fraction · n)` identities (target takes the remainder).
pub fn make_splits(ids: &[usize], fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let unique: HashSet<_> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(invalid("identity list has duplicates"));
    }
    let n = ids.len();
    let n_private = (fractions[0] * n as f64).round() as usize;
    let n_public = ((fractions[1] * n as f64).round() as usize).min(n - n_private);
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5b])));
    let mut take = |k: usize| {
        let mut part: Vec<usize> = order.drain(..k).collect();
        part.sort_unstable();
        part
    };
    let private = take(n_private);
    let public = take(n_public);
    let rest = n - n_private - n_public;
    let target = take(rest);
    let s = Splits { private, public, target };
    s.check_disjoint()?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

/// Exactly `n_pos` same-identity and `n_neg` different-identity pairs over
/// `identities` (the identity of each sample), with no repeated pairing.
pub fn verification_pairs(identities: &[usize], n_pos: usize, n_neg: usize, seed: u64) -> Result<Vec<Pair>> {
    let n = identities.len();
    let mut pos_avail = 0usize;
    let mut neg_avail = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if identities[i] == identities[j] {
                pos_avail += 1;
            } else {
                neg_avail += 1;
            }
        }
    }
    if n_pos > pos_avail || n_neg > neg_avail {
        return Err(invalid(format!(
            "asked for {n_pos}/{n_neg} pairs but only {pos_avail}/{neg_avail} distinct ones exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xa1]));
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(n_pos + n_neg);
    for (want, same) in [(n_pos, true), (n_neg, false)] {
        let mut got = 0;
        while got < want {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i == j || (identities[i] == identities[j]) != same {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                pairs.push(Pair { a: key.0, b: key.1, same });
                got += 1;
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_partition_the_input() {
        let ids: Vec<usize> = (0..60).collect();
        let s = make_splits(&ids, [1.0 / 3.0, 0.5, 1.0 / 6.0], 4).unwrap();
        assert_eq!((s.private.len(), s.public.len(), s.target.len()), (20, 30, 10));
        let mut all: Vec<usize> = s.private.iter().chain(&s.public).chain(&s.target).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert_eq!(s, make_splits(&ids, [1.0 / 3.0, 0.5, 1.0 / 6.0], 4).unwrap());
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(make_splits(&[0, 1, 2], [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn pair_counts_and_labels() {
        let ids: Vec<usize> = (0..40).map(|i| i / 4).collect();
        let pairs = verification_pairs(&ids, 30, 50, 2).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.same).count(), 30);
        assert_eq!(pairs.iter().filter(|p| !p.same).count(), 50);
        for p in &pairs {
            assert_eq!(ids[p.a] == ids[p.b], p.same);
        }
        let unique: HashSet<_> = pairs.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(unique.len(), pairs.len());
        assert_eq!(pairs, verification_pairs(&ids, 30, 50, 2).unwrap());
    }

    #[test]
    fn impossible_pair_request_rejected() {
        assert!(verification_pairs(&[0, 1, 2], 1, 0, 0).is_err());
    }
}
