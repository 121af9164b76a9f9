//! Subject-specific transfer learning on held-out subjects.
//!
//! Each test subject's trials, in recording order, are cut into contiguous
//! chunks. Every chunk is predicted by a copy of the pretrained model tuned
//! on the subject's other chunks, so no trial is ever scored by a model that
//! saw it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::fold_stem;
use super::config::ExperimentConfig;
use super::dataset::load_dataset;
use super::metrics::write_json;
use super::runs::{device_setup, prepare_output, renormalize, selected_folds};
use super::trainer::{Trainer, TrainSettings};
use crate::data::Trial;
use crate::error::{Error, Result};
use crate::optimizer::LrSchedule;
use crate::rng;
use crate::snn::{argmax, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub fold: usize,
    pub subject: u32,
    pub trials: usize,
    pub correct_before: usize,
    pub correct_after: usize,
    pub events: u64,
}

impl SubjectResult {
    pub fn before(&self) -> f64 {
        100.0 * self.correct_before as f64 / self.trials.max(1) as f64
    }

    pub fn after(&self) -> f64 {
        100.0 * self.correct_after as f64 / self.trials.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SstlReport {
    pub subjects: Vec<SubjectResult>,
    /// Pooled over every evaluated trial, percent.
    pub cumulative_before: f64,
    pub cumulative_after: f64,
    pub total_events: u64,
}

impl SstlReport {
    pub fn from_subjects(subjects: Vec<SubjectResult>) -> Self {
        let n: usize = subjects.iter().map(|s| s.trials).sum();
        let pct = |c: usize| 100.0 * c as f64 / n.max(1) as f64;
        Self {
            cumulative_before: pct(subjects.iter().map(|s| s.correct_before).sum()),
            cumulative_after: pct(subjects.iter().map(|s| s.correct_after).sum()),
            total_events: subjects.iter().map(|s| s.events).sum(),
            subjects,
        }
    }
}

/// Splits `n` items into `k` contiguous ranges whose lengths differ by at
/// most one, longer ranges first.
pub fn chunk_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn predict(net: &Network, trials: &[&Trial]) -> Result<Vec<usize>> {
    trials.iter().map(|t| Ok(argmax(&net.scores(&t.input)?))).collect()
}

/// Tunes and scores one subject; returns `(correct_after, events)`.
fn tune_subject(
    cfg: &ExperimentConfig,
    base: &Network,
    trials: &[&Trial],
    subject: u32,
) -> Result<(usize, u64)> {
    let s = &cfg.sstl;
    let device = if s.on_device { Some(device_setup(cfg, cfg.device.policy)?) } else { None };
    let ranges = chunk_ranges(trials.len(), s.chunks);
    let per_chunk: Vec<(usize, u64)> = ranges
        .par_iter()
        .enumerate()
        .map(|(q, held)| {
            let tune: Vec<Trial> = trials
                .iter()
                .enumerate()
                .filter(|(i, _)| !held.contains(i))
                .map(|(_, t)| (*t).clone())
                .collect();
            let settings = TrainSettings {
                epochs: s.epochs,
                batch_size: s.batch_size,
                schedule: LrSchedule { lr_initial: s.lr, lr_final: s.lr * s.lr_final_ratio, total_epochs: s.epochs },
                adam: cfg.training.adam,
                trainable: s.layers.clone(),
                train_decays: false,
                train_temporal: false,
                seed: rng::derive_seed(cfg.seed, &[rng::tag("sstl"), u64::from(subject), q as u64]),
            };
            let mut tr = Trainer::new(base.clone(), settings, device)?;
            if !tune.is_empty() {
                while !tr.finished() {
                    tr.train_epoch(&tune)?;
                }
            }
            let held_trials = &trials[held.clone()];
            let preds = predict(&tr.net, held_trials)?;
            let correct = preds.iter().zip(held_trials).filter(|(p, t)| **p == t.label.class()).count();
            Ok((correct, tr.events.cumulative_total()))
        })
        .collect::<Result<_>>()?;
    Ok(per_chunk.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1)))
}

pub fn run_sstl(cfg: &ExperimentConfig) -> Result<SstlReport> {
    cfg.validate()?;
    let source = cfg.checkpoint.as_deref().ok_or_else(|| Error::Config("no checkpoint".into()))?;
    let data = load_dataset(cfg)?;
    let mut writer = prepare_output(cfg, Some(&data))?;
    let mut results = Vec::new();
    for k in selected_folds(cfg, &data)? {
        let ckpt = super::checkpoint::load_checkpoint(&fold_stem(source, k))?;
        let fd = renormalize(&data, k, &ckpt.normalizer)?;
        let net = ckpt.trainer.net;
        let mut by_subject: BTreeMap<u32, Vec<&Trial>> = BTreeMap::new();
        for t in &fd.test {
            by_subject.entry(t.subject).or_default().push(t);
        }
        if let Some(keep) = &cfg.sstl.subjects {
            by_subject.retain(|s, _| keep.contains(s));
        }
        for (subject, mut trials) in by_subject {
            trials.sort_by(|a, b| (a.run, a.onset).partial_cmp(&(b.run, b.onset)).expect("finite onsets"));
            if trials.len() < cfg.sstl.chunks {
                log::warn!("subject {subject}: {} trials, fewer than {} chunks; skipped", trials.len(), cfg.sstl.chunks);
                continue;
            }
            let before = predict(&net, &trials)?;
            let correct_before = before.iter().zip(&trials).filter(|(p, t)| **p == t.label.class()).count();
            let (correct_after, events) = tune_subject(cfg, &net, &trials, subject)?;
            let r = SubjectResult { fold: k, subject, trials: trials.len(), correct_before, correct_after, events };
            log::info!("subject {subject}: {:.1}% -> {:.1}%", r.before(), r.after());
            writer.write("subject", &r)?;
            results.push(r);
        }
    }
    let report = SstlReport::from_subjects(results);
    let mut w = csv::Writer::from_path(cfg.output_dir.join("sstl_subjects.csv"))?;
    for s in &report.subjects {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(&cfg.output_dir, e))?;
    write_json(&cfg.output_dir.join("sstl.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_in_order() {
        assert_eq!(chunk_ranges(10, 4), vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(chunk_ranges(45, 4).iter().map(|r| r.len()).collect::<Vec<_>>(), vec![12, 11, 11, 11]);
    }

    #[test]
    fn pooled_accuracy() {
        let s = |trials, b, a| SubjectResult { fold: 0, subject: 1, trials, correct_before: b, correct_after: a, events: 0 };
        let r = SstlReport::from_subjects(vec![s(10, 5, 8), s(30, 15, 18)]);
        assert_eq!(r.cumulative_before, 50.0);
        assert_eq!(r.cumulative_after, 65.0);
    }
}
