//! Per-cell z-scoring with statistics from training trials only.

use serde::{Deserialize, Serialize};

use super::trials::Trial;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Mean and population std over every timestep of every trial. Cells
    /// that never vary (no electrode) get std 0 and stay at zero.
    pub fn fit<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for tr in trials {
            let cells = tr.input.len() / tr.timesteps;
            if sum.is_empty() {
                sum = vec![0.0; cells];
                sq = vec![0.0; cells];
            } else if sum.len() != cells {
                return Err(Error::shape("normalizer frame", sum.len(), cells));
            }
            for frame in tr.input.chunks_exact(cells) {
                for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(frame) {
                    let v = f64::from(v);
                    *s += v;
                    *q += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Dataset("no trials to fit normalization".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                if var > 1e-24 { var.sqrt() } else { 0.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, trial: &mut Trial) {
        let cells = self.mean.len();
        for frame in trial.input.chunks_exact_mut(cells) {
            for ((v, m), s) in frame.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s > 0.0 { ((f64::from(*v) - m) / s) as f32 } else { 0.0 };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::trials::Label;

    fn trial(vals: &[f32]) -> Trial {
        Trial { input: vals.to_vec(), timesteps: vals.len() / 2, label: Label::Left, subject: 1, run: 4, onset: 0.0 }
    }

    #[test]
    fn standardizes_training_cells() {
        let train = [trial(&[1.0, 0.0, 3.0, 0.0]), trial(&[5.0, 0.0, 7.0, 0.0])];
        let n = Normalizer::fit(&train).unwrap();
        assert_eq!(n.mean, vec![4.0, 0.0]);
        assert!((n.std[0] - 5.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(n.std[1], 0.0);
        let mut t = trial(&[4.0, 9.0, 6.0, 9.0]);
        n.apply(&mut t);
        assert_eq!(t.input[0], 0.0);
        assert_eq!(t.input[1], 0.0);
        assert!((f64::from(t.input[2]) - 2.0 / 5.0f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(Normalizer::fit(&[]).is_err());
    }
}
