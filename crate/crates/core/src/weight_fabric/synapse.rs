use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mapping::{map_from_device, map_to_device, LayerBound, W_MINUS_REF};
use crate::device_model::{apply_pulse, FerroKernelParams, Polarity};
use crate::error::{Error, Result};

/// What the threshold percentage is taken of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpan {
    /// The full weight range `[-bound, bound]`, i.e. `2·bound`.
    #[default]
    FullRange,
    /// Only `bound`.
    HalfRange,
}

/// Programming noise added to the conductance after each pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "std", rename_all = "snake_case")]
pub enum WriteNoise {
    #[default]
    None,
    /// Fixed std in normalized conductance units.
    Absolute(f64),
    /// Std as a fraction of the conductance level reached by the pulse.
    Relative(f64),
}

impl WriteNoise {
    /// Measured device: 3.75 % of the programmed level.
    pub const MEASURED_DEVICE: WriteNoise = WriteNoise::Relative(0.0375);
}

/// Thresholds of the accumulate-and-fire update rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgrammingPolicy {
    /// Base threshold as a fraction of the layer weight range.
    pub epsilon: f64,
    /// LTD threshold multiplier.
    pub epsilon_asym: f64,
    pub max_events_per_batch_per_weight: u32,
    #[serde(default)]
    pub span: ThresholdSpan,
    #[serde(default)]
    pub write_noise: WriteNoise,
}

impl Default for ProgrammingPolicy {
    fn default() -> Self {
        Self {
            epsilon: 0.025,
            epsilon_asym: 1.0,
            max_events_per_batch_per_weight: 1,
            span: ThresholdSpan::FullRange,
            write_noise: WriteNoise::None,
        }
    }
}

impl ProgrammingPolicy {
    pub fn new(epsilon: f64, epsilon_asym: f64) -> Result<Self> {
        let p = Self {
            epsilon,
            epsilon_asym,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.epsilon_asym > 0.0 && self.epsilon_asym.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon_asym must be positive, got {}",
                self.epsilon_asym
            )));
        }
        Ok(())
    }

    /// LTP threshold in weight units for a layer.
    pub fn ltp_threshold(&self, bound: &LayerBound) -> f64 {
        let span = match self.span {
            ThresholdSpan::FullRange => bound.range(),
            ThresholdSpan::HalfRange => bound.bound,
        };
        self.epsilon * span
    }

    /// LTD threshold magnitude in weight units.
    pub fn ltd_threshold(&self, bound: &LayerBound) -> f64 {
        self.ltp_threshold(bound) * self.epsilon_asym
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgrammingEvent {
    pub synapse: usize,
    pub polarity: Polarity,
    pub w_before: f64,
    pub w_after: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommitSummary {
    pub ltp: u64,
    pub ltd: u64,
    pub events: Vec<ProgrammingEvent>,
}

impl CommitSummary {
    pub fn total(&self) -> u64 {
        self.ltp + self.ltd
    }
}

/// One layer's active devices plus their digital update accumulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSynapseArray {
    pub name: String,
    pub bound: LayerBound,
    w_plus: Vec<f64>,
    acc: Vec<f64>,
    ltp_events: u64,
    ltd_events: u64,
}

impl DifferentialSynapseArray {
    /// Programs the devices to represent `weights` (clamped to the bound).
    pub fn from_weights(name: impl Into<String>, weights: &[f64], bound: LayerBound) -> Self {
        Self {
            name: name.into(),
            bound,
            w_plus: weights.iter().map(|&w| map_to_device(w, &bound)).collect(),
            acc: vec![0.0; weights.len()],
            ltp_events: 0,
            ltd_events: 0,
        }
    }

    /// Restores an array from saved device state.
    pub fn from_state(name: impl Into<String>, bound: LayerBound, w_plus: Vec<f64>, acc: Vec<f64>) -> Result<Self> {
        if w_plus.len() != acc.len() {
            return Err(Error::shape("synapse state", w_plus.len(), acc.len()));
        }
        if let Some(&w) = w_plus.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Domain { value: w });
        }
        Ok(Self {
            name: name.into(),
            bound,
            w_plus,
            acc,
            ltp_events: 0,
            ltd_events: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.w_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_plus.is_empty()
    }

    pub fn w_plus(&self) -> &[f64] {
        &self.w_plus
    }

    pub fn w_minus_ref(&self) -> f64 {
        W_MINUS_REF
    }

    pub fn acc(&self) -> &[f64] {
        &self.acc
    }

    pub fn ltp_events(&self) -> u64 {
        self.ltp_events
    }

    pub fn ltd_events(&self) -> u64 {
        self.ltd_events
    }

    pub fn reset_counters(&mut self) {
        self.ltp_events = 0;
        self.ltd_events = 0;
    }

    pub fn clear_accumulators(&mut self) {
        self.acc.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Network-domain weights currently encoded by the devices.
    pub fn weights(&self) -> Vec<f64> {
        self.w_plus.iter().map(|&w| map_from_device(w, &self.bound)).collect()
    }

    pub fn write_weights(&self, out: &mut [f64]) -> Result<()> {
        if out.len() != self.len() {
            return Err(Error::shape(format!("{} weights", self.name), self.len(), out.len()));
        }
        for (o, &w) in out.iter_mut().zip(&self.w_plus) {
            *o = map_from_device(w, &self.bound);
        }
        Ok(())
    }

    /// Adds per-synapse weight deltas to the accumulators. Devices are not
    /// touched.
    pub fn accumulate(&mut self, deltas: &[f64]) -> Result<()> {
        if deltas.len() != self.len() {
            return Err(Error::shape(format!("{} accumulate", self.name), self.len(), deltas.len()));
        }
        for (a, d) in self.acc.iter_mut().zip(deltas) {
            *a += d;
        }
        Ok(())
    }

    /// Compares every accumulator against the asymmetric thresholds and fires
    /// at most `max_events_per_batch_per_weight` pulses per synapse. A fired
    /// synapse has its accumulator reset to zero.
    pub fn commit<R: Rng + ?Sized>(
        &mut self,
        policy: &ProgrammingPolicy,
        params: &FerroKernelParams,
        rng: &mut R,
    ) -> Result<CommitSummary> {
        let ltp_th = policy.ltp_threshold(&self.bound);
        let ltd_th = policy.ltd_threshold(&self.bound);
        let mut summary = CommitSummary::default();
        for i in 0..self.w_plus.len() {
            let mut fired = 0;
            while fired < policy.max_events_per_batch_per_weight {
                let acc = self.acc[i];
                let polarity = if acc >= ltp_th {
                    Polarity::Ltp
                } else if acc <= -ltd_th {
                    Polarity::Ltd
                } else {
                    break;
                };
                let before = self.w_plus[i];
                let std = match policy.write_noise {
                    WriteNoise::None => 0.0,
                    WriteNoise::Absolute(s) => s,
                    WriteNoise::Relative(f) => {
                        let step = crate::device_model::delta_w(before, polarity, params)?;
                        f * (before + step).clamp(0.0, 1.0)
                    }
                };
                let after = apply_pulse(before, polarity, params, std, rng)?;
                self.w_plus[i] = after;
                self.acc[i] = 0.0;
                match polarity {
                    Polarity::Ltp => {
                        self.ltp_events = self.ltp_events.saturating_add(1);
                        summary.ltp += 1;
                    }
                    Polarity::Ltd => {
                        self.ltd_events = self.ltd_events.saturating_add(1);
                        summary.ltd += 1;
                    }
                }
                summary.events.push(ProgrammingEvent {
                    synapse: i,
                    polarity,
                    w_before: before,
                    w_after: after,
                });
                fired += 1;
            }
        }
        Ok(summary)
    }
}
