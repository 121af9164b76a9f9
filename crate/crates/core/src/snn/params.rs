use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lif::{SpikeFn, SurrogateParams};
use super::spec::{Layer, NetworkSpec};
use crate::error::{Error, Result};

/// Neuron constants shared by all spiking layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronConfig {
    pub v_th: f64,
    pub surrogate: SurrogateParams,
    #[serde(default)]
    pub spike_fn: SpikeFn,
    pub init_beta: f64,
    pub init_gamma: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            v_th: 0.3,
            surrogate: SurrogateParams::default(),
            spike_fn: SpikeFn::Heaviside,
            init_beta: 0.8,
            init_gamma: 0.8,
        }
    }
}

/// Trainable tensors: synaptic weights per layer, per-layer decays and the
/// temporal output weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub weights: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub w_ts: Vec<f64>,
}

impl NetworkParams {
    /// Uniform initialization within each layer's fan-in bound; decays at
    /// their configured start values; temporal weights at `1/T`.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, neuron: &NeuronConfig, rng: &mut R) -> Self {
        let weights = Layer::ALL
            .iter()
            .map(|&l| {
                let b = spec.bound(l).bound;
                (0..spec.weight_len(l)).map(|_| rng.gen_range(-b..=b)).collect()
            })
            .collect();
        Self {
            weights,
            beta: vec![neuron.init_beta; Layer::ALL.len()],
            gamma: vec![neuron.init_gamma; Layer::ALL.len()],
            w_ts: vec![1.0 / spec.timesteps as f64; spec.timesteps],
        }
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        if self.weights.len() != Layer::ALL.len() {
            return Err(Error::shape("layer count", Layer::ALL.len(), self.weights.len()));
        }
        for l in Layer::ALL {
            let (want, got) = (spec.weight_len(l), self.weights[l.index()].len());
            if want != got {
                return Err(Error::shape(format!("{l} weights"), want, got));
            }
        }
        if self.beta.len() != Layer::ALL.len() || self.gamma.len() != Layer::ALL.len() {
            return Err(Error::shape("decays", Layer::ALL.len(), self.beta.len().min(self.gamma.len())));
        }
        if self.w_ts.len() != spec.timesteps {
            return Err(Error::shape("temporal weights", spec.timesteps, self.w_ts.len()));
        }
        Ok(())
    }

    pub fn weights(&self, layer: Layer) -> &[f64] {
        &self.weights[layer.index()]
    }

    pub fn weights_mut(&mut self, layer: Layer) -> &mut [f64] {
        &mut self.weights[layer.index()]
    }

    pub fn clamp_weights(&mut self, spec: &NetworkSpec) {
        for l in Layer::ALL {
            let b = spec.bound(l);
            self.weights[l.index()].iter_mut().for_each(|w| *w = b.clamp(*w));
        }
    }

    pub fn clamp_decays(&mut self) {
        for d in self.beta.iter_mut().chain(self.gamma.iter_mut()) {
            *d = d.clamp(0.0, 1.0);
        }
    }
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub w_ts: Vec<f64>,
}

impl Gradients {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            weights: Layer::ALL.iter().map(|&l| vec![0.0; spec.weight_len(l)]).collect(),
            beta: vec![0.0; Layer::ALL.len()],
            gamma: vec![0.0; Layer::ALL.len()],
            w_ts: vec![0.0; spec.timesteps],
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in [(&mut self.beta, &other.beta), (&mut self.gamma, &other.gamma), (&mut self.w_ts, &other.w_ts)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, f: f64) {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.beta.iter_mut())
            .chain(self.gamma.iter_mut())
            .chain(self.w_ts.iter_mut())
            .for_each(|x| *x *= f);
    }

    pub fn weights(&self, layer: Layer) -> &[f64] {
        &self.weights[layer.index()]
    }

    /// Sum of squares over every tensor.
    pub fn norm_sq(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .chain(&self.beta)
            .chain(&self.gamma)
            .chain(&self.w_ts)
            .map(|x| x * x)
            .sum()
    }
}
