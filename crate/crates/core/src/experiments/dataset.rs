//! Dataset loading and per-fold splits.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::data::{
    load_corpus, make_folds, read_trial_cache, synth_dataset, synth_subjects, write_trial_cache, CacheSettings,
    FoldPlan, FoldSplit, GridLayout, Normalizer, Trial, PROTOCOL_SUBJECTS,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Pool {
    /// Fixed train/validation/test trials, one fold.
    Fixed { train: Vec<Trial>, validation: Vec<Trial>, test: Vec<Trial> },
    /// Subject-wise cross-validation.
    Subjects { trials: Vec<Trial>, plan: FoldPlan },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pool: Pool,
}

/// Normalized trials of one fold.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub fold: usize,
    pub split: Option<FoldSplit>,
    pub train: Vec<Trial>,
    pub validation: Vec<Trial>,
    pub test: Vec<Trial>,
    pub normalizer: Normalizer,
}

impl FoldData {
    pub fn test_subjects(&self) -> BTreeSet<u32> {
        self.test.iter().map(|t| t.subject).collect()
    }
}

/// Fails when any subject contributes trials to both training and testing.
pub fn assert_subject_disjoint(train: &[Trial], test: &[Trial]) -> Result<()> {
    let test_ids: BTreeSet<u32> = test.iter().map(|t| t.subject).collect();
    if let Some(t) = train.iter().find(|t| test_ids.contains(&t.subject)) {
        return Err(Error::Assertion(format!("subject {} appears in both training and test trials", t.subject)));
    }
    Ok(())
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { spec, train, validation, test, held_out_subjects } => {
            let seed = crate::rng::derive_seed(cfg.seed, &[crate::rng::tag("dataset")]);
            let (mut tr, te) = if *held_out_subjects == 0 {
                let mut all = synth_dataset(spec, train + validation + test, seed);
                let te = all.split_off(train + validation);
                (all, te)
            } else {
                let first = spec.subjects.max(1) + 1;
                let ids: Vec<u32> = (first..first + held_out_subjects).collect();
                let per = test.div_ceil(*held_out_subjects as usize);
                (synth_dataset(spec, train + validation, seed), synth_subjects(spec, &ids, per, seed))
            };
            let va = tr.split_off(*train);
            Ok(Dataset { rows: spec.rows, cols: spec.cols, pool: Pool::Fixed { train: tr, validation: va, test: te } })
        }
        DatasetConfig::Physionet { root, layout, cache, options } => {
            let layout = match layout {
                Some(p) => GridLayout::load(p)?,
                None => GridLayout::standard(),
            };
            let settings = CacheSettings {
                window: options.window.clone(),
                filter: options.filter,
                grid: (layout.rows, layout.cols),
            };
            let cached = match cache {
                Some(stem) if stem.with_extension("json").exists() => Some(read_trial_cache(stem, &settings)?),
                _ => None,
            };
            let mut trials = match cached {
                Some(t) => {
                    log::info!("loaded {} trials from cache", t.len());
                    t
                }
                None => {
                    let corpus = load_corpus(root, options, &layout)?;
                    for (s, why) in &corpus.excluded {
                        log::info!("excluded subject {s}: {why}");
                    }
                    if let Some(stem) = cache {
                        write_trial_cache(stem, &corpus.trials, &settings)?;
                    }
                    corpus.trials
                }
            };
            trials.retain(|t| !options.exclude.contains(&t.subject));
            let subjects: Vec<u32> = trials.iter().map(|t| t.subject).collect::<BTreeSet<_>>().into_iter().collect();
            if subjects.len() != PROTOCOL_SUBJECTS {
                log::warn!("{} subjects included; the standard protocol has {PROTOCOL_SUBJECTS}", subjects.len());
            }
            let mut plan = make_folds(&subjects, cfg.folds.count, cfg.seed)?;
            plan.validation_fraction = cfg.folds.validation_fraction;
            Ok(Dataset { rows: layout.rows, cols: layout.cols, pool: Pool::Subjects { trials, plan } })
        }
    }
}

impl Dataset {
    pub fn fold_count(&self) -> usize {
        match &self.pool {
            Pool::Fixed { .. } => 1,
            Pool::Subjects { plan, .. } => plan.len(),
        }
    }

    pub fn plan(&self) -> Option<&FoldPlan> {
        match &self.pool {
            Pool::Subjects { plan, .. } => Some(plan),
            Pool::Fixed { .. } => None,
        }
    }

    pub fn trial_count(&self) -> usize {
        match &self.pool {
            Pool::Fixed { train, validation, test } => train.len() + validation.len() + test.len(),
            Pool::Subjects { trials, .. } => trials.len(),
        }
    }

    /// Trials of fold `k`, z-scored with statistics of its training trials.
    pub fn fold(&self, k: usize) -> Result<FoldData> {
        let mut fd = self.fold_raw(k)?;
        let n = fd.normalizer.clone();
        for t in fd.train.iter_mut().chain(&mut fd.validation).chain(&mut fd.test) {
            n.apply(t);
        }
        Ok(fd)
    }

    /// Unnormalized trials of fold `k` with the normalizer fitted on its
    /// training trials.
    pub fn fold_raw(&self, k: usize) -> Result<FoldData> {
        let (split, train, validation, test) = match &self.pool {
            Pool::Fixed { train, validation, test } => {
                if k != 0 {
                    return Err(Error::Config(format!("fold {k} out of range; dataset has one fold")));
                }
                (None, train.clone(), validation.clone(), test.clone())
            }
            Pool::Subjects { trials, plan } => {
                let split = plan.split(k)?;
                let pick = |ids: &[u32]| -> Vec<Trial> {
                    let set: BTreeSet<u32> = ids.iter().copied().collect();
                    trials.iter().filter(|t| set.contains(&t.subject)).cloned().collect()
                };
                let (tr, va, te) = (pick(&split.train), pick(&split.validation), pick(&split.test));
                assert_subject_disjoint(&tr, &te)?;
                assert_subject_disjoint(&va, &te)?;
                (Some(split), tr, va, te)
            }
        };
        if train.is_empty() {
            return Err(Error::Dataset(format!("fold {k} has no training trials")));
        }
        let normalizer = Normalizer::fit(&train)?;
        Ok(FoldData { fold: k, split, train, validation, test, normalizer })
    }

    /// SHA-256 over every trial's metadata and raw input bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |ts: &[Trial]| {
            for t in ts {
                h.update(t.subject.to_le_bytes());
                h.update(t.run.to_le_bytes());
                h.update([t.label.class() as u8]);
                h.update(t.onset.to_le_bytes());
                for x in &t.input {
                    h.update(x.to_le_bytes());
                }
            }
        };
        match &self.pool {
            Pool::Fixed { train, validation, test } => {
                feed(train);
                feed(validation);
                feed(test);
            }
            Pool::Subjects { trials, .. } => feed(trials),
        }
        hex::encode(h.finalize())
    }
}
