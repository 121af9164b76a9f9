//! Trainer checkpoints in the tensor container.
//!
//! Weights, decays, temporal weights, optimizer moments and device state are
//! tensors; everything else (architecture, settings, normalizer, event log,
//! epoch history, run config) is manifest metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::EpochRecord;
use super::trainer::{DeviceSetup, Fabric, Trainer, TrainSettings};
use crate::container::{TensorReader, TensorWriter};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::optimizer::{AdamConfig, AdamState};
use crate::snn::{Layer, Network, NetworkParams, NetworkSpec, NeuronConfig};
use crate::weight_fabric::{DifferentialSynapseArray, EventLog};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    fold: usize,
    epoch: usize,
    spec: NetworkSpec,
    neuron: NeuronConfig,
    settings: TrainSettings,
    adam_config: AdamConfig,
    adam_names: Vec<String>,
    adam_t: u64,
    device: Option<DeviceSetup>,
    fabric_layers: Vec<Layer>,
    events: EventLog,
    history: Vec<EpochRecord>,
    config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub fold: usize,
    pub trainer: Trainer,
    pub normalizer: Normalizer,
    pub history: Vec<EpochRecord>,
    pub config: ExperimentConfig,
}

/// Checkpoint stem of fold `k` under a run directory.
pub fn fold_stem(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join(format!("fold_{fold}")).join("checkpoint")
}

pub fn checkpoint_exists(stem: &Path) -> bool {
    stem.with_extension("json").exists() && stem.with_extension("bin").exists()
}

pub fn save_checkpoint(
    stem: &Path,
    fold: usize,
    trainer: &Trainer,
    normalizer: &Normalizer,
    history: &[EpochRecord],
    config: &ExperimentConfig,
) -> Result<()> {
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let net = &trainer.net;
    let mut w = TensorWriter::new();
    for l in Layer::ALL {
        w.push_f64(&format!("w/{l}"), &net.spec.weight_shape(l), net.params.weights(l), Some(net.spec.bound(l).bound))?;
    }
    w.push_f64("beta", &[7], &net.params.beta, None)?;
    w.push_f64("gamma", &[7], &net.params.gamma, None)?;
    w.push_f64("w_ts", &[net.params.w_ts.len()], &net.params.w_ts, None)?;
    for (name, (m, v)) in trainer.adam.names.iter().zip(trainer.adam.m.iter().zip(&trainer.adam.v)) {
        w.push_f64(&format!("adam_m/{name}"), &[m.len()], m, None)?;
        w.push_f64(&format!("adam_v/{name}"), &[v.len()], v, None)?;
    }
    let mut fabric_layers = Vec::new();
    if let Some(f) = &trainer.fabric {
        for (l, a) in &f.arrays {
            fabric_layers.push(*l);
            w.push_f64(&format!("w_plus/{l}"), &[a.len()], a.w_plus(), None)?;
            w.push_f64(&format!("acc/{l}"), &[a.len()], a.acc(), None)?;
        }
    }
    w.push_f64("norm_mean", &[normalizer.mean.len()], &normalizer.mean, None)?;
    w.push_f64("norm_std", &[normalizer.std.len()], &normalizer.std, None)?;
    let meta = Meta {
        fold,
        epoch: trainer.epoch,
        spec: net.spec.clone(),
        neuron: net.neuron,
        settings: trainer.settings.clone(),
        adam_config: trainer.adam.config,
        adam_names: trainer.adam.names.clone(),
        adam_t: trainer.adam.t,
        device: trainer.fabric.as_ref().map(|f| f.setup),
        fabric_layers,
        events: trainer.events.clone(),
        history: history.to_vec(),
        config: config.clone(),
    };
    w.set_meta(serde_json::to_value(meta)?);
    // write to a sibling stem first so an interrupted save never clobbers
    // the previous checkpoint
    let tmp = stem.with_file_name(format!(
        "{}-partial",
        stem.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    ));
    w.write(&tmp)?;
    for ext in ["bin", "json"] {
        let (from, to) = (tmp.with_extension(ext), stem.with_extension(ext));
        std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let r = TensorReader::open(stem)?;
    let meta: Meta = serde_json::from_value(r.manifest.meta.clone())
        .map_err(|e| Error::Container(format!("{}: bad checkpoint metadata: {e}", stem.display())))?;
    let weights = Layer::ALL.iter().map(|l| r.f64(&format!("w/{l}"))).collect::<Result<Vec<_>>>()?;
    let params = NetworkParams { weights, beta: r.f64("beta")?, gamma: r.f64("gamma")?, w_ts: r.f64("w_ts")? };
    let net = Network::new(meta.spec.clone(), meta.neuron, params)?;
    let mut adam = AdamState::new(meta.adam_config, std::iter::empty::<(String, usize)>());
    for name in &meta.adam_names {
        adam.names.push(name.clone());
        adam.m.push(r.f64(&format!("adam_m/{name}"))?);
        adam.v.push(r.f64(&format!("adam_v/{name}"))?);
    }
    adam.t = meta.adam_t;
    let fabric = match meta.device {
        Some(setup) => {
            let arrays = meta
                .fabric_layers
                .iter()
                .map(|&l| {
                    let a = DifferentialSynapseArray::from_state(
                        l.name(),
                        net.spec.bound(l),
                        r.f64(&format!("w_plus/{l}"))?,
                        r.f64(&format!("acc/{l}"))?,
                    )?;
                    Ok((l, a))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Fabric { setup, arrays })
        }
        None => None,
    };
    let trainer = Trainer::restore(net, meta.settings, adam, fabric, meta.events, meta.epoch)?;
    let normalizer = Normalizer { mean: r.f64("norm_mean")?, std: r.f64("norm_std")? };
    Ok(Checkpoint { fold: meta.fold, trainer, normalizer, history: meta.history, config: meta.config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::device_model::FerroKernelParams;
    use crate::optimizer::LrSchedule;
    use crate::weight_fabric::ProgrammingPolicy;

    #[test]
    fn resume_matches_uninterrupted_run() {
        let data = synth_dataset(&SynthSpec { timesteps: 8, snr: 3.0, ..Default::default() }, 24, 1);
        let norm = Normalizer::fit(&data).unwrap();
        let spec = NetworkSpec::reference(8).scaled(16);
        let net = Network::init(spec, NeuronConfig::default(), 5).unwrap();
        let settings = TrainSettings::full(3, 8, LrSchedule { lr_initial: 5e-3, lr_final: 5e-4, total_epochs: 3 }, 9);
        let dev = Some(DeviceSetup { params: FerroKernelParams::MEASURED_DEVICE, policy: ProgrammingPolicy::default() });

        let mut full = Trainer::new(net.clone(), settings.clone(), dev).unwrap();
        for _ in 0..3 {
            full.train_epoch(&data).unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let stem = fold_stem(dir.path(), 0);
        let mut part = Trainer::new(net, settings, dev).unwrap();
        part.train_epoch(&data).unwrap();
        save_checkpoint(&stem, 0, &part, &norm, &[], &ExperimentConfig::default()).unwrap();
        assert!(checkpoint_exists(&stem));
        let mut resumed = load_checkpoint(&stem).unwrap();
        assert_eq!(resumed.normalizer, norm);
        assert_eq!(resumed.trainer.epoch, 1);
        for _ in 0..2 {
            resumed.trainer.train_epoch(&data).unwrap();
        }
        assert_eq!(resumed.trainer.net.params, full.net.params);
        assert_eq!(resumed.trainer.events, full.events);
        assert_eq!(resumed.trainer.adam, full.adam);
        assert!(full.events.cumulative_total() > 0);
    }
}
