//! Mini-batch training loop shared by every regime.
//!
//! Synaptic weights are updated either directly in software (clamped to the
//! layer bound) or through per-layer differential synapse arrays. Decays
//! and temporal weights always take the software path. All random streams
//! are derived from the run seed plus epoch and batch numbers, so resuming
//! from an epoch checkpoint reproduces an uninterrupted run bit for bit.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Trial;
use crate::device_model::FerroKernelParams;
use crate::error::{Error, Result};
use crate::optimizer::{adam_step, apply_software, cosine_lr, AdamConfig, AdamState, LrSchedule};
use crate::rng;
use crate::snn::{argmax, softmax_cross_entropy, Layer, Network};
use crate::weight_fabric::{DifferentialSynapseArray, EventLog, ProgrammingPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    /// Layers whose synaptic weights are trained.
    pub trainable: Vec<Layer>,
    pub train_decays: bool,
    pub train_temporal: bool,
    pub seed: u64,
}

impl TrainSettings {
    pub fn full(epochs: usize, batch_size: usize, schedule: LrSchedule, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            schedule,
            adam: AdamConfig::default(),
            trainable: Layer::ALL.to_vec(),
            train_decays: true,
            train_temporal: true,
            seed,
        }
    }

    /// Lowest layer the backward pass has to reach.
    pub fn lowest_layer(&self) -> Layer {
        if self.train_decays {
            return Layer::Conv1;
        }
        self.trainable.iter().copied().min().unwrap_or(Layer::Fc2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSetup {
    pub params: FerroKernelParams,
    pub policy: ProgrammingPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Tensor {
    Weights(Layer),
    Beta,
    Gamma,
    Temporal,
}

impl Tensor {
    fn name(self) -> String {
        match self {
            Tensor::Weights(l) => l.name().to_string(),
            Tensor::Beta => "beta".into(),
            Tensor::Gamma => "gamma".into(),
            Tensor::Temporal => "w_ts".into(),
        }
    }
}

/// Device state for the trainable layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Fabric {
    pub setup: DeviceSetup,
    pub arrays: Vec<(Layer, DifferentialSynapseArray)>,
}

impl Fabric {
    pub fn new(net: &Network, layers: &[Layer], setup: DeviceSetup) -> Result<Self> {
        setup.policy.validate()?;
        setup.params.validate()?;
        let arrays = layers
            .iter()
            .map(|&l| (l, DifferentialSynapseArray::from_weights(l.name(), net.params.weights(l), net.spec.bound(l))))
            .collect();
        Ok(Self { setup, arrays })
    }

    pub fn total_events(&self) -> u64 {
        self.arrays.iter().map(|(_, a)| a.ltp_events() + a.ltd_events()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub ltp_events: u64,
    pub ltd_events: u64,
    pub cumulative_events: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Percent correct.
    pub accuracy: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
    /// Trials whose two class scores were exactly equal.
    pub ties: usize,
}

/// Trial-level accuracy from the argmax of the aggregated scores; exact ties
/// go to class 0.
pub fn evaluate(net: &Network, trials: &[Trial]) -> Result<Evaluation> {
    let scored: Vec<(usize, f64, bool)> = trials
        .par_iter()
        .map(|t| {
            let y = net.scores(&t.input)?;
            let (loss, _) = softmax_cross_entropy(&y, t.label.class());
            let tie = y.windows(2).any(|w| w[0] == w[1]);
            Ok((argmax(&y), loss, tie))
        })
        .collect::<Result<_>>()?;
    let correct = scored.iter().zip(trials).filter(|((p, _, _), t)| *p == t.label.class()).count();
    let ties = scored.iter().filter(|s| s.2).count();
    if ties > 0 {
        log::debug!("{ties} tied predictions resolved to class 0");
    }
    let n = trials.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: 100.0 * correct as f64 / n,
        loss: scored.iter().map(|s| s.1).sum::<f64>() / n,
        predictions: scored.into_iter().map(|s| s.0).collect(),
        ties,
    })
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub net: Network,
    pub settings: TrainSettings,
    pub adam: AdamState,
    pub fabric: Option<Fabric>,
    pub events: EventLog,
    /// Epochs completed so far.
    pub epoch: usize,
    tensors: Vec<Tensor>,
}

impl Trainer {
    pub fn new(net: Network, settings: TrainSettings, device: Option<DeviceSetup>) -> Result<Self> {
        if settings.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut tensors: Vec<Tensor> = Layer::ALL.iter().filter(|l| settings.trainable.contains(l)).map(|&l| Tensor::Weights(l)).collect();
        if settings.train_decays {
            tensors.extend([Tensor::Beta, Tensor::Gamma]);
        }
        if settings.train_temporal {
            tensors.push(Tensor::Temporal);
        }
        let adam = AdamState::new(settings.adam, tensors.iter().map(|&t| (t.name(), tensor_len(&net, t))));
        let fabric = device.map(|d| Fabric::new(&net, &settings.trainable, d)).transpose()?;
        let mut t = Self { net, settings, adam, fabric, events: EventLog::default(), epoch: 0, tensors };
        // devices quantize nothing but clamp; keep the network in sync
        t.sync_from_fabric()?;
        Ok(t)
    }

    /// Reassembles a trainer from checkpointed parts.
    pub fn restore(
        net: Network,
        settings: TrainSettings,
        adam: AdamState,
        fabric: Option<Fabric>,
        events: EventLog,
        epoch: usize,
    ) -> Result<Self> {
        let mut t = Self::new(net, settings, None)?;
        if t.adam.names != adam.names || t.adam.m.iter().zip(&adam.m).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Container(format!("optimizer tensors {:?} do not match the settings", adam.names)));
        }
        if let Some(f) = &fabric {
            if f.arrays.iter().map(|x| x.0).ne(t.settings.trainable.iter().copied()) {
                return Err(Error::Container("device layers do not match the trainable layers".into()));
            }
        }
        t.adam = adam;
        t.fabric = fabric;
        t.events = events;
        t.epoch = epoch;
        t.sync_from_fabric()?;
        Ok(t)
    }

    fn sync_from_fabric(&mut self) -> Result<()> {
        if let Some(f) = &self.fabric {
            for (l, a) in &f.arrays {
                a.write_weights(self.net.params.weights_mut(*l))?;
            }
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        cosine_lr(epoch, &self.settings.schedule)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.settings.epochs
    }

    /// Runs one epoch over `data` in a seeded shuffled order.
    pub fn train_epoch(&mut self, data: &[Trial]) -> Result<EpochStats> {
        let epoch = self.epoch;
        let lr = self.lr(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(self.settings.seed, &[rng::tag("shuffle"), epoch as u64]));
        let lowest = self.settings.lowest_layer();
        let (mut loss, mut correct) = (0.0, 0usize);
        let (mut ltp, mut ltd) = (0u64, 0u64);
        for (b, idx) in order.chunks(self.settings.batch_size).enumerate() {
            let batch: Vec<(&[f32], usize)> = idx.iter().map(|&k| (data[k].input.as_slice(), data[k].label.class())).collect();
            let g = self.net.batch_gradient(&batch, lowest)?;
            loss += g.loss * idx.len() as f64;
            correct += g.correct;
            let grads: Vec<&[f64]> = self
                .tensors
                .iter()
                .map(|t| match *t {
                    Tensor::Weights(l) => g.grads.weights(l),
                    Tensor::Beta => &g.grads.beta[..],
                    Tensor::Gamma => &g.grads.gamma[..],
                    Tensor::Temporal => &g.grads.w_ts[..],
                })
                .collect();
            let deltas = adam_step(&mut self.adam, &grads, lr)?;
            let (p, d) = self.apply(&deltas, epoch, b)?;
            ltp += p;
            ltd += d;
        }
        self.epoch += 1;
        let n = data.len().max(1) as f64;
        Ok(EpochStats {
            epoch,
            lr,
            loss: loss / n,
            accuracy: 100.0 * correct as f64 / n,
            ltp_events: ltp,
            ltd_events: ltd,
            cumulative_events: self.events.cumulative_total(),
        })
    }

    fn apply(&mut self, deltas: &[Vec<f64>], epoch: usize, batch: usize) -> Result<(u64, u64)> {
        let spec = self.net.spec.clone();
        let mut device_deltas: Vec<(Layer, &[f64])> = Vec::new();
        for (t, d) in self.tensors.iter().zip(deltas) {
            match *t {
                Tensor::Weights(l) if self.fabric.is_some() => device_deltas.push((l, d)),
                Tensor::Weights(l) => apply_software(self.net.params.weights_mut(l), d, spec.bound(l))?,
                Tensor::Beta => add(&mut self.net.params.beta, d),
                Tensor::Gamma => add(&mut self.net.params.gamma, d),
                Tensor::Temporal => add(&mut self.net.params.w_ts, d),
            }
        }
        self.net.params.clamp_decays();
        let Some(fabric) = &mut self.fabric else { return Ok((0, 0)) };
        let seed = self.settings.seed;
        let setup = fabric.setup;
        let summaries: Vec<(Layer, u64, u64)> = fabric
            .arrays
            .par_iter_mut()
            .map(|(l, arr)| {
                let d = device_deltas.iter().find(|(dl, _)| dl == l).map(|x| x.1).ok_or_else(|| Error::Assertion(format!("no delta for {l}")))?;
                arr.accumulate(d)?;
                let mut r = rng::stream(seed, &[rng::tag("commit"), epoch as u64, batch as u64, l.index() as u64]);
                let s = arr.commit(&setup.policy, &setup.params, &mut r)?;
                Ok((*l, s.ltp, s.ltd))
            })
            .collect::<Result<_>>()?;
        let (mut ltp, mut ltd) = (0, 0);
        for (l, p, d) in summaries {
            self.events.record(epoch, batch, l.name(), p, d);
            ltp += p;
            ltd += d;
        }
        self.sync_from_fabric()?;
        Ok((ltp, ltd))
    }
}

fn tensor_len(net: &Network, t: Tensor) -> usize {
    match t {
        Tensor::Weights(l) => net.params.weights(l).len(),
        Tensor::Beta => net.params.beta.len(),
        Tensor::Gamma => net.params.gamma.len(),
        Tensor::Temporal => net.params.w_ts.len(),
    }
}

fn add(x: &mut [f64], d: &[f64]) {
    x.iter_mut().zip(d).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::snn::{NetworkSpec, NeuronConfig};

    fn setup(seed: u64) -> (Network, Vec<Trial>) {
        let synth = SynthSpec { timesteps: 10, snr: 3.0, ..SynthSpec::default() };
        let spec = NetworkSpec::reference(10).scaled(16);
        (Network::init(spec, NeuronConfig::default(), seed).unwrap(), synth_dataset(&synth, 32, seed))
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let (net, data) = setup(1);
        let mut s = TrainSettings::full(1, 8, LrSchedule { lr_initial: 0.0, lr_final: 0.0, total_epochs: 1 }, 1);
        s.adam = AdamConfig::default();
        let mut t = Trainer::new(net.clone(), s.clone(), None).unwrap();
        t.train_epoch(&data).unwrap();
        assert_eq!(t.net.params, net.params);
        let dev = DeviceSetup { params: FerroKernelParams::MEASURED_DEVICE, policy: ProgrammingPolicy::default() };
        let mut t = Trainer::new(net.clone(), s, Some(dev)).unwrap();
        let before = t.net.params.clone();
        let stats = t.train_epoch(&data).unwrap();
        assert_eq!(stats.cumulative_events, 0);
        assert_eq!(t.net.params, before);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let run = || {
            let (net, data) = setup(2);
            let s = TrainSettings::full(2, 8, LrSchedule { lr_initial: 5e-3, lr_final: 5e-4, total_epochs: 2 }, 2);
            let dev = DeviceSetup { params: FerroKernelParams::MEASURED_DEVICE, policy: ProgrammingPolicy::default() };
            let mut t = Trainer::new(net, s, Some(dev)).unwrap();
            t.train_epoch(&data).unwrap();
            t.train_epoch(&data).unwrap();
            (t.net.params, t.events)
        };
        let (a, ea) = run();
        let (b, eb) = run();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
        assert!(ea.cumulative_total() > 0);
    }

    #[test]
    fn frozen_layers_stay_put() {
        let (net, data) = setup(3);
        let mut s = TrainSettings::full(1, 8, LrSchedule { lr_initial: 1e-2, lr_final: 1e-3, total_epochs: 1 }, 3);
        s.trainable = vec![Layer::Fc1, Layer::Fc2];
        s.train_decays = false;
        s.train_temporal = false;
        assert_eq!(s.lowest_layer(), Layer::Fc1);
        let mut t = Trainer::new(net.clone(), s, None).unwrap();
        t.train_epoch(&data).unwrap();
        for l in &Layer::ALL[..5] {
            assert_eq!(t.net.params.weights(*l), net.params.weights(*l));
        }
        assert_eq!(t.net.params.beta, net.params.beta);
        assert_eq!(t.net.params.w_ts, net.params.w_ts);
        assert_ne!(t.net.params.weights(Layer::Fc2), net.params.weights(Layer::Fc2));
    }

    #[test]
    fn weights_respect_bounds() {
        let (net, data) = setup(4);
        let s = TrainSettings::full(1, 4, LrSchedule { lr_initial: 0.5, lr_final: 0.5, total_epochs: 1 }, 4);
        let mut t = Trainer::new(net, s, None).unwrap();
        t.train_epoch(&data).unwrap();
        for l in Layer::ALL {
            let b = t.net.spec.bound(l).bound;
            assert!(t.net.params.weights(l).iter().all(|w| w.abs() <= b));
        }
        assert!(t.net.params.beta.iter().chain(&t.net.params.gamma).all(|d| (0.0..=1.0).contains(d)));
    }
}
