//! Cue-locked trial extraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::edf::EdfRecording;
use super::filter::{Bandpass, BandpassSpec};
use super::grid::GridLayout;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Left,
    Right,
}

impl Label {
    pub fn class(self) -> usize {
        match self {
            Label::Left => 0,
            Label::Right => 1,
        }
    }

    pub fn from_class(c: usize) -> Self {
        if c == 0 {
            Label::Left
        } else {
            Label::Right
        }
    }
}

/// One segment as a `T × rows × cols` sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub input: Vec<f32>,
    pub timesteps: usize,
    pub label: Label,
    pub subject: u32,
    pub run: u32,
    /// Cue onset in seconds from recording start.
    pub onset: f64,
}

impl Trial {
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.input.len() / self.timesteps;
        &self.input[t * n..(t + 1) * n]
    }
}

/// Which runs contain imagery cues and what their codes mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueTable {
    pub imagery_runs: Vec<u32>,
    pub codes: BTreeMap<String, Label>,
}

impl Default for CueTable {
    /// Left/right fist imagery runs of the EEG motor movement/imagery set.
    fn default() -> Self {
        Self {
            imagery_runs: vec![4, 8, 12],
            codes: [("T1".to_string(), Label::Left), ("T2".to_string(), Label::Right)].into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialWindow {
    pub start_s: f64,
    pub length_s: f64,
}

impl Default for TrialWindow {
    fn default() -> Self {
        Self { start_s: 0.0, length_s: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub trials: Vec<Trial>,
    /// Cues whose window ran past the end of the recording.
    pub dropped: usize,
}

/// Filters every channel over the whole run, projects to the grid and cuts
/// one window per labelled cue.
pub fn extract_trials(
    rec: &EdfRecording,
    subject: u32,
    run: u32,
    table: &CueTable,
    window: &TrialWindow,
    layout: &GridLayout,
    filter: Option<&BandpassSpec>,
) -> Result<Extraction> {
    let empty = Extraction { trials: Vec::new(), dropped: 0 };
    if !table.imagery_runs.contains(&run) {
        return Ok(empty);
    }
    let cues: Vec<(f64, Label)> = rec
        .annotations
        .iter()
        .filter_map(|a| table.codes.get(a.label.trim()).map(|&l| (a.onset, l)))
        .collect();
    if cues.is_empty() {
        return Ok(empty);
    }
    let chans: Vec<usize> = rec.data_signals().collect();
    let fs = chans.first().map(|&c| rec.sampling_rate(c)).ok_or_else(|| Error::Dataset("recording has no data signals".into()))?;
    if chans.iter().any(|&c| (rec.sampling_rate(c) - fs).abs() > 1e-9) {
        return Err(Error::Dataset(format!("subject {subject} run {run}: mixed sampling rates")));
    }
    let labels: Vec<&str> = chans.iter().map(|&c| rec.signals[c].label.as_str()).collect();
    let map = layout.channel_map(&labels)?;
    let design = filter.map(|f| Bandpass::design(&BandpassSpec { fs, ..*f })).transpose()?;
    let mut series: Vec<(usize, Vec<f64>)> = Vec::with_capacity(64);
    for (&c, cell) in chans.iter().zip(&map) {
        let Some(cell) = *cell else { continue };
        let x = rec.physical(c);
        let x = match &design {
            Some(bp) => bp.filtfilt(&x)?,
            None => x,
        };
        series.push((cell, x));
    }
    let len = series.first().map_or(0, |s| s.1.len());
    let t_len = (window.length_s * fs).round() as usize;
    let cells = layout.cells();
    let mut trials = Vec::with_capacity(cues.len());
    let mut dropped = 0;
    for (onset, label) in cues {
        let start = ((onset + window.start_s) * fs).round();
        if start < 0.0 || start as usize + t_len > len {
            log::info!("subject {subject} run {run}: cue at {onset:.3} s too close to the recording edge, dropped");
            dropped += 1;
            continue;
        }
        let start = start as usize;
        let mut input = vec![0.0f32; t_len * cells];
        for (cell, x) in &series {
            for t in 0..t_len {
                input[t * cells + cell] = x[start + t] as f32;
            }
        }
        trials.push(Trial { input, timesteps: t_len, label, subject, run, onset });
    }
    Ok(Extraction { trials, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::edf::EdfBuilder;

    fn fixture(cues: &[(f64, &str)], seconds: usize) -> EdfRecording {
        let layout = GridLayout::standard();
        let fs = 160;
        let mut b = EdfBuilder::new(1.0);
        for (k, e) in layout.electrodes.iter().enumerate() {
            // each channel carries its index plus the sample clock
            let s: Vec<i16> = (0..fs * seconds).map(|n| (k as i16) * 100 + (n % 100) as i16).collect();
            b = b.signal(&format!("{}.", e.label), fs, (-32768.0, 32767.0), s);
        }
        for &(o, l) in cues {
            b = b.annotation(o, Some(4.1), l);
        }
        b.build().unwrap()
    }

    #[test]
    fn planted_cues_become_trials() {
        let cues = [(0.5, "T1"), (2.0, "T2"), (3.25, "T1"), (5.0, "T0"), (6.0, "T2"), (7.5, "T1")];
        let rec = fixture(&cues, 10);
        let layout = GridLayout::standard();
        let ex = extract_trials(&rec, 7, 4, &CueTable::default(), &TrialWindow::default(), &layout, None).unwrap();
        assert_eq!(ex.trials.len(), 5);
        assert_eq!(ex.dropped, 0);
        let onsets: Vec<f64> = ex.trials.iter().map(|t| t.onset).collect();
        assert_eq!(onsets, vec![0.5, 2.0, 3.25, 6.0, 7.5]);
        let cz = layout.index()["CZ"];
        let cz_chan = layout.electrodes.iter().position(|e| e.label == "Cz").unwrap() as f32;
        for tr in &ex.trials {
            assert_eq!(tr.timesteps, 160);
            assert_eq!(tr.subject, 7);
            let first = (tr.onset * 160.0).round() as usize;
            // the sample clock at the planted offset
            assert_eq!(tr.frame(0)[cz], cz_chan * 100.0 + (first % 100) as f32);
            assert_eq!(tr.frame(0).iter().filter(|&&v| v == 0.0).count() >= 46, true);
        }
        assert_eq!(ex.trials[1].label, Label::Right);
    }

    #[test]
    fn edge_cue_dropped_and_other_runs_ignored() {
        let rec = fixture(&[(1.0, "T1"), (9.5, "T2")], 10);
        let layout = GridLayout::standard();
        let ex = extract_trials(&rec, 1, 8, &CueTable::default(), &TrialWindow::default(), &layout, None).unwrap();
        assert_eq!((ex.trials.len(), ex.dropped), (1, 1));
        let ex = extract_trials(&rec, 1, 3, &CueTable::default(), &TrialWindow::default(), &layout, None).unwrap();
        assert!(ex.trials.is_empty());
    }

    #[test]
    fn no_cues_no_trials() {
        let rec = fixture(&[], 3);
        let ex = extract_trials(&rec, 1, 4, &CueTable::default(), &TrialWindow::default(), &GridLayout::standard(), None).unwrap();
        assert!(ex.trials.is_empty());
    }

    #[test]
    fn filtered_extraction_runs() {
        let rec = fixture(&[(1.0, "T1")], 4);
        let spec = BandpassSpec::eeg(160.0);
        let ex = extract_trials(&rec, 1, 4, &CueTable::default(), &TrialWindow::default(), &GridLayout::standard(), Some(&spec)).unwrap();
        assert_eq!(ex.trials.len(), 1);
        assert!(ex.trials[0].input.iter().all(|v| v.is_finite()));
    }
}
