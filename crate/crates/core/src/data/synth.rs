//! Two-class synthetic grid recordings with planted structure.
//!
//! Each class drives a Gaussian spatial blob at its own location and
//! frequency with a random phase per trial, on top of unit white noise.
//! `snr` is the blob's peak amplitude over the noise std.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trials::{Label, Trial};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub row: f64,
    pub col: f64,
    pub radius: f64,
    pub freq_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub timesteps: usize,
    pub fs: f64,
    pub snr: f64,
    pub noise_std: f64,
    pub classes: [Blob; 2],
    pub subjects: u32,
    /// Per-subject displacement of both blobs, in grid cells.
    pub subject_shift: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 11,
            timesteps: 40,
            fs: 160.0,
            snr: 5.0,
            noise_std: 1.0,
            classes: [
                Blob { row: 4.0, col: 3.0, radius: 1.5, freq_hz: 12.0 },
                Blob { row: 4.0, col: 7.0, radius: 1.5, freq_hz: 20.0 },
            ],
            subjects: 1,
            subject_shift: 0.0,
        }
    }
}

impl SynthSpec {
    /// Blob centres for a subject, displaced by a seeded random offset of
    /// length `subject_shift`.
    pub fn subject_blobs(&self, subject: u32, seed: u64) -> [Blob; 2] {
        if self.subject_shift == 0.0 {
            return self.classes;
        }
        let mut r = rng::stream(seed, &[rng::tag("subject-shift"), u64::from(subject)]);
        let angle = r.gen_range(0.0..std::f64::consts::TAU);
        let (dr, dc) = (self.subject_shift * angle.sin(), self.subject_shift * angle.cos());
        self.classes.map(|b| Blob { row: b.row + dr, col: b.col + dc, ..b })
    }

    fn render(&self, blob: &Blob, phase: f64, noise: &mut impl FnMut() -> f64) -> Vec<f32> {
        let cells = self.rows * self.cols;
        let amp = self.snr * self.noise_std;
        let weights: Vec<f64> = (0..cells)
            .map(|c| {
                let (r, k) = ((c / self.cols) as f64, (c % self.cols) as f64);
                let d2 = (r - blob.row).powi(2) + (k - blob.col).powi(2);
                amp * (-d2 / (2.0 * blob.radius * blob.radius)).exp()
            })
            .collect();
        let mut out = Vec::with_capacity(self.timesteps * cells);
        for t in 0..self.timesteps {
            let osc = (std::f64::consts::TAU * blob.freq_hz * t as f64 / self.fs + phase).sin();
            out.extend(weights.iter().map(|w| (w * osc + noise()) as f32));
        }
        out
    }
}

/// Balanced trials; trial `k` has class `k % 2` and belongs to subject
/// `1 + (k / 2) % subjects`. Each trial draws from its own stream so the
/// result is independent of thread count.
pub fn synth_dataset(spec: &SynthSpec, n_trials: usize, seed: u64) -> Vec<Trial> {
    let subjects = spec.subjects.max(1);
    (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let label = Label::from_class(k % 2);
            let subject = 1 + (k as u32 / 2) % subjects;
            let blob = spec.subject_blobs(subject, seed)[label.class()];
            let mut r = rng::stream(seed, &[rng::tag("trial"), k as u64]);
            let phase = r.gen_range(0.0..std::f64::consts::TAU);
            let normal = Normal::new(0.0, spec.noise_std).expect("finite noise std");
            let input = spec.render(&blob, phase, &mut || normal.sample(&mut r));
            Trial { input, timesteps: spec.timesteps, label, subject, run: 0, onset: k as f64 }
        })
        .collect()
}

/// `per_subject` balanced trials for each listed subject. Streams are keyed
/// by subject and trial index, so a subject's trials do not depend on which
/// other subjects are generated.
pub fn synth_subjects(spec: &SynthSpec, subjects: &[u32], per_subject: usize, seed: u64) -> Vec<Trial> {
    let jobs: Vec<(u32, usize)> = subjects.iter().flat_map(|&s| (0..per_subject).map(move |k| (s, k))).collect();
    jobs.into_par_iter()
        .map(|(subject, k)| {
            let label = Label::from_class(k % 2);
            let blob = spec.subject_blobs(subject, seed)[label.class()];
            let mut r = rng::stream(seed, &[rng::tag("subject-trial"), u64::from(subject), k as u64]);
            let phase = r.gen_range(0.0..std::f64::consts::TAU);
            let normal = Normal::new(0.0, spec.noise_std).expect("finite noise std");
            let input = spec.render(&blob, phase, &mut || normal.sample(&mut r));
            Trial { input, timesteps: spec.timesteps, label, subject, run: 0, onset: k as f64 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classifies by which class blob carries more energy.
    fn template_accuracy(spec: &SynthSpec, trials: &[Trial]) -> f64 {
        let cells = spec.rows * spec.cols;
        let centre = |b: &Blob| b.row.round() as usize * spec.cols + b.col.round() as usize;
        let (a, b) = (centre(&spec.classes[0]), centre(&spec.classes[1]));
        let correct = trials
            .iter()
            .filter(|tr| {
                let e = |c: usize| tr.input.chunks_exact(cells).map(|f| f64::from(f[c]).powi(2)).sum::<f64>();
                usize::from(e(b) > e(a)) == tr.label.class()
            })
            .count();
        correct as f64 / trials.len() as f64
    }

    #[test]
    fn balanced_and_shaped() {
        let spec = SynthSpec::default();
        let d = synth_dataset(&spec, 10, 1);
        assert_eq!(d.iter().filter(|t| t.label == Label::Left).count(), 5);
        assert!(d.iter().all(|t| t.input.len() == 40 * 110));
    }

    #[test]
    fn noiseless_is_separable() {
        let spec = SynthSpec { snr: 1e6, ..SynthSpec::default() };
        assert_eq!(template_accuracy(&spec, &synth_dataset(&spec, 200, 2)), 1.0);
    }

    #[test]
    fn zero_snr_is_chance() {
        let spec = SynthSpec { snr: 0.0, ..SynthSpec::default() };
        let acc = template_accuracy(&spec, &synth_dataset(&spec, 1000, 3));
        assert!((acc - 0.5).abs() < 0.06, "{acc}");
    }

    #[test]
    fn seeded_determinism() {
        let spec = SynthSpec { subjects: 3, subject_shift: 1.0, ..SynthSpec::default() };
        assert_eq!(synth_dataset(&spec, 12, 9), synth_dataset(&spec, 12, 9));
        assert_ne!(synth_dataset(&spec, 12, 9), synth_dataset(&spec, 12, 10));
    }

    #[test]
    fn subject_trials_are_independent_of_the_subject_list() {
        let spec = SynthSpec { subject_shift: 1.0, ..SynthSpec::default() };
        let a = synth_subjects(&spec, &[3, 4], 4, 5);
        let b = synth_subjects(&spec, &[4], 4, 5);
        assert_eq!(&a[4..], &b[..]);
        assert!(a[..4].iter().all(|t| t.subject == 3));
    }

    #[test]
    fn subject_shift_moves_blobs() {
        let spec = SynthSpec { subjects: 2, subject_shift: 2.0, ..SynthSpec::default() };
        let b = spec.subject_blobs(1, 0);
        let d = ((b[0].row - 4.0).powi(2) + (b[0].col - 3.0).powi(2)).sqrt();
        assert!((d - 2.0).abs() < 1e-12);
        assert_ne!(spec.subject_blobs(1, 0), spec.subject_blobs(2, 0));
    }
}
