//! Loader for a directory of `SxxxRyy.edf` motor imagery recordings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edf::read_edf;
use super::filter::BandpassSpec;
use super::grid::GridLayout;
use super::trials::{extract_trials, CueTable, Trial, TrialWindow};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusOptions {
    pub cues: CueTable,
    pub window: TrialWindow,
    pub filter: Option<BandpassSpec>,
    pub expected_rate: f64,
    /// Subjects to drop regardless of the automatic checks.
    pub exclude: Vec<u32>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            cues: CueTable::default(),
            window: TrialWindow::default(),
            filter: Some(BandpassSpec::eeg(160.0)),
            expected_rate: 160.0,
            exclude: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub trials: Vec<Trial>,
    pub included: Vec<u32>,
    /// Excluded subject with the reason.
    pub excluded: BTreeMap<u32, String>,
}

/// `(subject, run)` from a file name like `S001R04.edf`.
pub fn parse_run_name(path: &Path) -> Option<(u32, u32)> {
    let stem = path.file_stem()?.to_str()?.to_ascii_uppercase();
    if !path.extension()?.to_str()?.eq_ignore_ascii_case("edf") {
        return None;
    }
    let rest = stem.strip_prefix('S')?;
    let (s, r) = rest.split_once('R')?;
    Some((s.parse().ok()?, r.parse().ok()?))
}

fn load_run(path: &Path, subject: u32, run: u32, opts: &CorpusOptions, layout: &GridLayout) -> Result<Vec<Trial>> {
    let rec = read_edf(path)?;
    let rate = rec.data_signals().next().map(|c| rec.sampling_rate(c)).unwrap_or(0.0);
    if (rate - opts.expected_rate).abs() > 1e-9 {
        return Err(Error::Dataset(format!("sampling rate {rate} Hz")));
    }
    if rec.annotations.windows(2).any(|w| w[1].onset < w[0].onset) {
        return Err(Error::Dataset("annotation onsets out of order".into()));
    }
    let filter = opts.filter.map(|f| BandpassSpec { fs: rate, ..f });
    let ex = extract_trials(&rec, subject, run, &opts.cues, &opts.window, layout, filter.as_ref())?;
    Ok(ex.trials)
}

/// Reads every imagery run below `root`. A subject is excluded when any of
/// its runs fails the rate or annotation checks, or when listed explicitly.
pub fn load_corpus(root: &Path, opts: &CorpusOptions, layout: &GridLayout) -> Result<Corpus> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset directory {} not found", root.display())));
    }
    let mut files: Vec<(u32, u32, PathBuf)> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter_map(|e| parse_run_name(e.path()).map(|(s, r)| (s, r, e.into_path())))
        .filter(|(_, r, _)| opts.cues.imagery_runs.contains(r))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no imagery runs found under {}", root.display())));
    }
    let loaded: Vec<(u32, u32, Result<Vec<Trial>>)> = files
        .par_iter()
        .map(|(s, r, p)| (*s, *r, load_run(p, *s, *r, opts, layout)))
        .collect();
    let mut excluded: BTreeMap<u32, String> = opts.exclude.iter().map(|&s| (s, "listed".to_string())).collect();
    let mut trials = Vec::new();
    for (s, r, res) in loaded {
        match res {
            Ok(t) => trials.extend(t),
            Err(e) => {
                log::warn!("subject {s} run {r} rejected: {e}");
                excluded.entry(s).or_insert_with(|| format!("run {r}: {e}"));
            }
        }
    }
    trials.retain(|t| !excluded.contains_key(&t.subject));
    let included: BTreeSet<u32> = trials.iter().map(|t| t.subject).collect();
    Ok(Corpus { trials, included: included.into_iter().collect(), excluded })
}
