//! Subject-wise cross-validation plans.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Subject count of the motor imagery protocol after exclusions.
pub const PROTOCOL_SUBJECTS: usize = 103;
/// Subject ids present in the full corpus.
pub const CORPUS_SUBJECTS: std::ops::RangeInclusive<u32> = 1..=109;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<u32>>,
    pub seed: u64,
    pub validation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

impl FoldSplit {
    pub fn assert_disjoint(&self) -> Result<()> {
        let test: std::collections::HashSet<_> = self.test.iter().collect();
        if let Some(s) = self.train.iter().chain(&self.validation).find(|s| test.contains(s)) {
            return Err(Error::Assertion(format!("subject {s} appears in both training and test sets")));
        }
        Ok(())
    }
}

/// Partitions subjects in id order into `k` contiguous parts whose sizes
/// differ by at most one, larger parts first.
pub fn make_folds(subjects: &[u32], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || subjects.len() < k {
        return Err(Error::Config(format!("cannot split {} subjects into {k} folds", subjects.len())));
    }
    let mut ids = subjects.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate subject ids".into()));
    }
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut rest = ids.as_slice();
    for f in 0..k {
        let (head, tail) = rest.split_at(base + usize::from(f < extra));
        folds.push(head.to_vec());
        rest = tail;
    }
    Ok(FoldPlan { folds, seed, validation_fraction: 0.2 })
}

/// The five-fold plan over the protocol's included subjects.
pub fn protocol_folds(included: &[u32], seed: u64) -> Result<FoldPlan> {
    if included.len() != PROTOCOL_SUBJECTS {
        let excluded: Vec<u32> = CORPUS_SUBJECTS.filter(|s| !included.contains(s)).collect();
        return Err(Error::Config(format!(
            "{} subjects included, protocol needs {PROTOCOL_SUBJECTS}; excluded ids: {excluded:?}",
            included.len()
        )));
    }
    make_folds(included, 5, seed)
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Test subjects are fold `k`; the others are shuffled with the plan
    /// seed and split into training and validation subjects.
    pub fn split(&self, k: usize) -> Result<FoldSplit> {
        let test = self.folds.get(k).ok_or_else(|| Error::Config(format!("fold {k} out of range")))?.clone();
        let mut rest: Vec<u32> = self.folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.iter().copied()).collect();
        let mut r = rng::stream(self.seed, &[rng::tag("validation"), k as u64]);
        rest.shuffle(&mut r);
        let n_val = (rest.len() as f64 * self.validation_fraction).round() as usize;
        let mut validation = rest[..n_val].to_vec();
        let mut train = rest[n_val..].to_vec();
        validation.sort_unstable();
        train.sort_unstable();
        let split = FoldSplit { train, validation, test };
        split.assert_disjoint()?;
        Ok(split)
    }
}
