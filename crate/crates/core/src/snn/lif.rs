//! Leaky integrate-and-fire dynamics with trainable current and voltage
//! decays, and the rectangular surrogate derivative of the spike function.
//!
//! ```text
//! i_t = β·i_{t-1} + I_t
//! v_t = γ·v_{t-1}·(1 − s_{t-1}) + i_t
//! s_t = H(v_t − v_th)
//! ```

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Current decay.
    pub beta: f64,
    /// Voltage decay.
    pub gamma: f64,
    pub v_th: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub i: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
}

impl LifState {
    pub fn zeros(n: usize) -> Self {
        Self {
            i: vec![0.0; n],
            v: vec![0.0; n],
            s: vec![0.0; n],
        }
    }
}

/// Rectangular window: derivative `amplitude` where `|v − v_th| < window`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    pub amplitude: f64,
    pub window: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            window: 0.25,
        }
    }
}

/// Spike nonlinearity used in the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeFn {
    /// Binary spikes, `v ≥ v_th`.
    #[default]
    Heaviside,
    /// The clipped-linear antiderivative of the surrogate,
    /// `A·clamp(v − v_th + g, 0, 2g)`. Its exact derivative is the surrogate,
    /// which makes the backward pass an exact gradient of this forward.
    Relaxed,
}

#[inline]
pub fn surrogate_grad(v: f64, sp: &SurrogateParams, v_th: f64) -> f64 {
    if (v - v_th).abs() < sp.window {
        sp.amplitude
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn spike(v: f64, v_th: f64, f: SpikeFn, sp: &SurrogateParams) -> f64 {
    match f {
        SpikeFn::Heaviside => {
            if v >= v_th {
                1.0
            } else {
                0.0
            }
        }
        SpikeFn::Relaxed => sp.amplitude * (v - v_th + sp.window).clamp(0.0, 2.0 * sp.window),
    }
}

/// One in-place LIF update for a population.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn step_into(
    i_prev: &[f64],
    v_prev: &[f64],
    s_prev: &[f64],
    input: &[f64],
    p: &LifParams,
    f: SpikeFn,
    sp: &SurrogateParams,
    i_out: &mut [f64],
    v_out: &mut [f64],
    s_out: &mut [f64],
) {
    for j in 0..input.len() {
        let i = p.beta * i_prev[j] + input[j];
        let v = p.gamma * v_prev[j] * (1.0 - s_prev[j]) + i;
        i_out[j] = i;
        v_out[j] = v;
        s_out[j] = spike(v, p.v_th, f, sp);
    }
}

/// Advances a population by one timestep with binary spikes.
pub fn lif_step(state: &LifState, syn_input: &[f64], params: &LifParams) -> LifState {
    let n = syn_input.len();
    assert_eq!(state.i.len(), n, "state and input sizes differ");
    let mut next = LifState::zeros(n);
    step_into(
        &state.i,
        &state.v,
        &state.s,
        syn_input,
        params,
        SpikeFn::Heaviside,
        &SurrogateParams::default(),
        &mut next.i,
        &mut next.v,
        &mut next.s,
    );
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_without_input() {
        let p = LifParams { beta: 0.8, gamma: 0.8, v_th: 0.3 };
        let mut s = LifState::zeros(3);
        for _ in 0..10 {
            s = lif_step(&s, &[0.0; 3], &p);
        }
        assert_eq!(s, LifState::zeros(3));
    }

    #[test]
    fn memoryless_crossing() {
        let p = LifParams { beta: 0.0, gamma: 0.0, v_th: 1.0 };
        let s = lif_step(&LifState::zeros(1), &[1.1], &p);
        assert_eq!(s.s, vec![1.0]);
    }

    #[test]
    fn matches_scalar_recurrence() {
        let p = LifParams { beta: 0.5, gamma: 0.8, v_th: 1.0 };
        // independent scalar reference
        let (mut i, mut v, mut s) = (0.0f64, 0.0f64, 0.0f64);
        let mut want = Vec::new();
        for _ in 0..50 {
            i = 0.5 * i + 0.3;
            v = 0.8 * v * (1.0 - s) + i;
            s = if v >= 1.0 { 1.0 } else { 0.0 };
            want.push(s);
        }
        let mut st = LifState::zeros(1);
        let mut got = Vec::new();
        for _ in 0..50 {
            st = lif_step(&st, &[0.3], &p);
            got.push(st.s[0]);
        }
        assert_eq!(got, want);
        assert!(got.iter().any(|&x| x == 1.0));
    }

    #[test]
    fn reset_removes_carry() {
        let p = LifParams { beta: 0.0, gamma: 0.9, v_th: 0.5 };
        let st = lif_step(&LifState::zeros(1), &[1.0], &p);
        assert_eq!(st.s[0], 1.0);
        let next = lif_step(&st, &[0.1], &p);
        assert_eq!(next.v[0], 0.1);
    }

    #[test]
    fn surrogate_window() {
        let sp = SurrogateParams { amplitude: 1.5, window: 0.25 };
        assert_eq!(surrogate_grad(0.3, &sp, 0.3), 1.5);
        assert_eq!(surrogate_grad(0.55, &sp, 0.3), 0.0);
        assert_eq!(surrogate_grad(0.3 - 0.25, &sp, 0.3), 0.0);
        // midpoint quadrature over the window
        let n = 200_000;
        let (a, b) = (0.3 - 0.25, 0.3 + 0.25);
        let h = (b - a) / n as f64;
        let integral: f64 = (0..n).map(|k| surrogate_grad(a + (k as f64 + 0.5) * h, &sp, 0.3) * h).sum();
        assert!((integral - 2.0 * 1.5 * 0.25).abs() < 1e-9);
    }

    #[test]
    fn relaxed_spike_is_antiderivative() {
        let sp = SurrogateParams { amplitude: 2.0, window: 0.25 };
        for k in 0..100 {
            let v = -0.2 + k as f64 * 0.01;
            let h = 1e-7;
            let num = (spike(v + h, 0.3, SpikeFn::Relaxed, &sp) - spike(v - h, 0.3, SpikeFn::Relaxed, &sp)) / (2.0 * h);
            if ((v - 0.3).abs() - 0.25).abs() > 1e-6 {
                assert!((num - surrogate_grad(v, &sp, 0.3)).abs() < 1e-6);
            }
        }
    }
}
