//! Adam with bias correction, cosine-annealed learning rate and bounded
//! software weight updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weight_fabric::LayerBound;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// Moments for a fixed list of named tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub names: Vec<String>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<S: Into<String>>(config: AdamConfig, tensors: impl IntoIterator<Item = (S, usize)>) -> Self {
        let (names, lens): (Vec<String>, Vec<usize>) = tensors.into_iter().map(|(n, l)| (n.into(), l)).unzip();
        Self {
            config,
            m: lens.iter().map(|&l| vec![0.0; l]).collect(),
            v: lens.iter().map(|&l| vec![0.0; l]).collect(),
            names,
            t: 0,
        }
    }
}

/// Advances the moments and returns `−lr·m̂/(√v̂ + ε̂)` per tensor.
///
/// Gradients are checked before any state changes, so a failed step leaves
/// the optimizer untouched.
pub fn adam_step(state: &mut AdamState, grads: &[&[f64]], lr: f64) -> Result<Vec<Vec<f64>>> {
    if grads.len() != state.m.len() {
        return Err(Error::shape("optimizer tensors", state.m.len(), grads.len()));
    }
    for ((g, m), name) in grads.iter().zip(&state.m).zip(&state.names) {
        if g.len() != m.len() {
            return Err(Error::shape(format!("optimizer tensor {name}"), m.len(), g.len()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: name.clone() });
        }
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps_hat } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let mut deltas = Vec::with_capacity(grads.len());
    for ((g, m), v) in grads.iter().zip(&mut state.m).zip(&mut state.v) {
        let d = g
            .iter()
            .zip(m.iter_mut())
            .zip(v.iter_mut())
            .map(|((&g, m), v)| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                -lr * (*m / c1) / ((*v / c2).sqrt() + eps_hat)
            })
            .collect();
        deltas.push(d);
    }
    Ok(deltas)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(total_epochs: usize) -> Self {
        Self {
            lr_initial: 1e-4,
            lr_final: 1e-5,
            total_epochs,
        }
    }
}

/// Cosine annealing from `lr_initial` at epoch 0 to `lr_final` at
/// `total_epochs`; epochs past the end stay at `lr_final`.
pub fn cosine_lr(epoch: usize, s: &LrSchedule) -> f64 {
    if s.total_epochs == 0 || epoch == 0 {
        return s.lr_initial;
    }
    if epoch >= s.total_epochs {
        return s.lr_final;
    }
    let phase = std::f64::consts::PI * epoch as f64 / s.total_epochs as f64;
    s.lr_final + 0.5 * (s.lr_initial - s.lr_final) * (1.0 + phase.cos())
}

/// `w ← clamp(w + delta, −bound, +bound)`.
pub fn apply_software(weights: &mut [f64], deltas: &[f64], bound: LayerBound) -> Result<()> {
    if weights.len() != deltas.len() {
        return Err(Error::shape("software update", weights.len(), deltas.len()));
    }
    for (w, d) in weights.iter_mut().zip(deltas) {
        *w = bound.clamp(*w + d);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    struct ScalarAdam {
        m: f64,
        v: f64,
        t: i32,
    }

    impl ScalarAdam {
        fn step(&mut self, g: f64, lr: f64) -> f64 {
            self.t += 1;
            self.m = 0.9 * self.m + 0.1 * g;
            self.v = 0.999 * self.v + 0.001 * g * g;
            let mh = self.m / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v / (1.0 - 0.999f64.powi(self.t));
            -lr * mh / (vh.sqrt() + 1e-8)
        }
    }

    fn single(len: usize) -> AdamState {
        AdamState::new(AdamConfig::default(), [("w", len)])
    }

    #[test]
    fn zero_gradient_zero_delta() {
        let mut s = single(4);
        let d = adam_step(&mut s, &[&[0.0; 4]], 1e-3).unwrap();
        assert_eq!(d[0], vec![0.0; 4]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut s = single(1);
        let d = adam_step(&mut s, &[&[1.0]], 0.01).unwrap();
        // 1/(1 + 1e-8)
        assert!((d[0][0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_reference() {
        let mut r = crate::rng::stream(3, &[]);
        let mut s = single(3);
        let mut refs: Vec<ScalarAdam> = (0..3).map(|_| ScalarAdam { m: 0.0, v: 0.0, t: 0 }).collect();
        for k in 0..100 {
            let g: Vec<f64> = (0..3).map(|_| r.gen_range(-5.0..5.0)).collect();
            let lr = 1e-3 / (1.0 + k as f64);
            let d = adam_step(&mut s, &[&g], lr).unwrap();
            for j in 0..3 {
                assert!((d[0][j] - refs[j].step(g[j], lr)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn steady_state_magnitude_is_lr() {
        let mut s = single(1);
        let mut last = 0.0;
        for _ in 0..1000 {
            last = adam_step(&mut s, &[&[0.37]], 2e-3).unwrap()[0][0];
        }
        assert!((last.abs() - 2e-3).abs() / 2e-3 < 0.01);
    }

    #[test]
    fn non_finite_names_tensor_and_keeps_state() {
        let mut s = AdamState::new(AdamConfig::default(), [("conv1", 2), ("fc2", 1)]);
        let err = adam_step(&mut s, &[&[0.0, 1.0], &[f64::NAN]], 1e-3).unwrap_err();
        assert!(err.to_string().contains("fc2"));
        assert_eq!(s.t, 0);
        assert!(adam_step(&mut s, &[&[0.0]], 1e-3).is_err());
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = LrSchedule::new(100);
        assert!((cosine_lr(0, &s) - 1e-4).abs() <= 1e-4 * 1e-12);
        assert!((cosine_lr(100, &s) - 1e-5).abs() <= 1e-5 * 1e-12);
        assert!((cosine_lr(50, &s) - 5.5e-5).abs() <= 1e-15);
        let mut prev = f64::INFINITY;
        for e in 0..=100 {
            let lr = cosine_lr(e, &s);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn clamps_to_bound() {
        let b = LayerBound::from_fan_in(9);
        let mut w = vec![0.3, -0.1, 0.0];
        apply_software(&mut w, &[0.5, 0.0, 0.0], b).unwrap();
        assert_eq!(w, vec![b.bound, -0.1, 0.0]);
        assert!(apply_software(&mut w, &[0.0], b).is_err());
    }

    proptest! {
        #[test]
        fn zero_delta_idempotent(ws in proptest::collection::vec(-0.5f64..0.5, 1..50)) {
            let b = LayerBound::from_fan_in(16);
            let mut w: Vec<f64> = ws.iter().map(|&x| b.clamp(x)).collect();
            let before = w.clone();
            let zeros = vec![0.0; w.len()];
            apply_software(&mut w, &zeros, b).unwrap();
            prop_assert_eq!(w, before);
        }

        #[test]
        fn software_matches_scalar_oracle(ws in proptest::collection::vec((-0.3f64..0.3, -0.2f64..0.2), 1..50)) {
            let b = LayerBound::from_fan_in(25);
            let mut w: Vec<f64> = ws.iter().map(|p| b.clamp(p.0)).collect();
            let d: Vec<f64> = ws.iter().map(|p| p.1).collect();
            let want: Vec<f64> = w.iter().zip(&d).map(|(x, y)| (x + y).max(-0.2).min(0.2)).collect();
            apply_software(&mut w, &d, b).unwrap();
            prop_assert_eq!(w, want);
        }
    }
}
