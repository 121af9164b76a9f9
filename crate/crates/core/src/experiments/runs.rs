//! Training regimes over subject-wise folds.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_exists, fold_stem, load_checkpoint, save_checkpoint};
use super::config::{ExperimentConfig, Regime};
use super::dataset::{load_dataset, Dataset, FoldData};
use super::metrics::{mean_std, write_curves, write_json, EpochRecord, FoldResult, MetricsWriter, RunManifest, RunMetrics};
use super::trainer::{evaluate, DeviceSetup, Evaluation, Trainer, TrainSettings};
use crate::error::{Error, Result};
use crate::optimizer::LrSchedule;
use crate::rng;
use crate::snn::{Layer, Network};
use crate::weight_fabric::{add_program_noise, quantize, ProgrammingPolicy};

pub(crate) fn prepare_output(cfg: &ExperimentConfig, data: Option<&Dataset>) -> Result<MetricsWriter> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = RunManifest::new(cfg);
    if let Some(d) = data {
        manifest.dataset_digest = Some(d.digest());
        manifest.trials = Some(d.trial_count());
        manifest.folds = d.plan().map(|p| p.folds.clone());
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    MetricsWriter::open(&dir.join("metrics.jsonl"), cfg.resume)
}

pub(crate) fn selected_folds(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<usize>> {
    let n = data.fold_count();
    let folds = cfg.folds.only.clone().unwrap_or_else(|| (0..n).collect());
    if let Some(k) = folds.iter().find(|&&k| k >= n) {
        return Err(Error::Config(format!("fold {k} requested but the dataset has {n}")));
    }
    Ok(folds)
}

pub(crate) fn device_setup(cfg: &ExperimentConfig, policy: ProgrammingPolicy) -> Result<DeviceSetup> {
    Ok(DeviceSetup { params: cfg.device.resolve_params()?, policy })
}

fn fold_result(fold: &FoldData, eval: &Evaluation, events: u64) -> FoldResult {
    FoldResult {
        fold: fold.fold,
        test_subjects: fold.test_subjects().into_iter().collect(),
        train_trials: fold.train.len(),
        test_trials: fold.test.len(),
        test_accuracy: eval.accuracy,
        test_loss: eval.loss,
        events,
        ties: eval.ties,
    }
}

/// Full training from scratch in software or device mode, one model per fold.
pub fn run_training(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    let on_device = match cfg.regime {
        Regime::BaselineSoftware => false,
        Regime::OnDevice => true,
        r => return Err(Error::Config(format!("run_training cannot run regime {}", r.name()))),
    };
    cfg.validate()?;
    let started = Instant::now();
    let data = load_dataset(cfg)?;
    let mut writer = prepare_output(cfg, Some(&data))?;
    let device = if on_device { Some(device_setup(cfg, cfg.device.policy)?) } else { None };
    let mut folds = Vec::new();
    let mut epochs = Vec::new();
    for k in selected_folds(cfg, &data)? {
        let fd = data.fold(k)?;
        let stem = fold_stem(&cfg.output_dir, k);
        let (mut trainer, mut history) = if cfg.resume && checkpoint_exists(&stem) {
            let c = load_checkpoint(&stem)?;
            log::info!("fold {k}: resuming after epoch {}", c.trainer.epoch);
            (c.trainer, c.history)
        } else {
            let spec = cfg.network_spec(data.rows, data.cols);
            let net = Network::init(spec, cfg.network.neuron, rng::derive_seed(cfg.seed, &[rng::tag("fold"), k as u64]))?;
            let settings = TrainSettings {
                adam: cfg.training.adam,
                ..TrainSettings::full(
                    cfg.training.epochs,
                    cfg.training.batch_size,
                    cfg.training.schedule(),
                    rng::derive_seed(cfg.seed, &[rng::tag("train"), k as u64]),
                )
            };
            (Trainer::new(net, settings, device)?, Vec::new())
        };
        while !trainer.finished() {
            let s = trainer.train_epoch(&fd.train)?;
            let val = if fd.validation.is_empty() { None } else { Some(evaluate(&trainer.net, &fd.validation)?) };
            let rec = EpochRecord {
                fold: k,
                epoch: s.epoch,
                lr: s.lr,
                train_loss: s.loss,
                train_accuracy: s.accuracy,
                validation_accuracy: val.as_ref().map(|v| v.accuracy),
                validation_loss: val.as_ref().map(|v| v.loss),
                ltp_events: s.ltp_events,
                ltd_events: s.ltd_events,
                cumulative_events: s.cumulative_events,
                elapsed_s: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "fold {k} epoch {}: loss {:.4} train {:.1}% val {} events {}",
                s.epoch,
                s.loss,
                s.accuracy,
                rec.validation_accuracy.map_or("-".into(), |a| format!("{a:.1}%")),
                s.cumulative_events
            );
            writer.write("epoch", &rec)?;
            history.push(rec);
            save_checkpoint(&stem, k, &trainer, &fd.normalizer, &history, cfg)?;
        }
        let eval = evaluate(&trainer.net, &fd.test)?;
        let result = fold_result(&fd, &eval, trainer.events.cumulative_total());
        log::info!("fold {k}: test accuracy {:.2}%", eval.accuracy);
        writer.write("fold", &result)?;
        if trainer.fabric.is_some() {
            let path = stem.with_file_name("events.csv");
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            trainer.events.write_csv(f)?;
        }
        folds.push(result);
        epochs.extend(history);
    }
    let metrics = RunMetrics::summarize(cfg.regime.name(), folds, epochs, started.elapsed().as_secs_f64());
    write_curves(&cfg.output_dir, &metrics.epochs)?;
    write_json(&cfg.output_dir.join("metrics.json"), &metrics)?;
    writer.write("summary", &serde_json::json!({
        "mean_test_accuracy": metrics.mean_test_accuracy,
        "std_test_accuracy": metrics.std_test_accuracy,
        "total_events": metrics.total_events,
    }))?;
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFold {
    pub fold: usize,
    /// Accuracy of the checkpoint as trained.
    pub reference_accuracy: f64,
    /// After quantization and programming noise.
    pub degraded_accuracy: f64,
    /// After each re-tuning epoch.
    pub retuned_accuracy: Vec<f64>,
    pub retune_events: Vec<u64>,
}

impl TransferFold {
    /// Share of the quantization drop won back after `epochs` re-tuning
    /// epochs; `None` when there was no drop.
    pub fn recovery(&self, epochs: usize) -> Option<f64> {
        let drop = self.reference_accuracy - self.degraded_accuracy;
        if drop <= 0.0 || epochs == 0 {
            return None;
        }
        let acc = *self.retuned_accuracy.get(epochs - 1)?;
        Some((acc - self.degraded_accuracy) / drop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub levels: Option<usize>,
    pub eta: f64,
    pub folds: Vec<TransferFold>,
    pub mean_reference: f64,
    pub mean_degraded: f64,
    pub mean_retuned: Vec<f64>,
}

/// Copies of `net` with every synaptic layer snapped to `levels` values and
/// perturbed by programming noise.
pub fn degrade(net: &Network, levels: Option<usize>, eta: f64, seed: u64) -> Result<Network> {
    let mut out = net.clone();
    for l in Layer::ALL {
        let b = net.spec.bound(l).bound;
        let mut w = net.params.weights(l).to_vec();
        if let Some(n) = levels {
            w = quantize(&w, n, b)?;
        }
        if eta > 0.0 {
            let mut r = rng::stream(seed, &[rng::tag("program-noise"), l.index() as u64]);
            w = add_program_noise(&w, eta, b, &mut r)?;
        }
        out.params.weights_mut(l).copy_from_slice(&w);
    }
    Ok(out)
}

/// Quantizes a pretrained model, adds programming noise, then re-tunes it
/// with device-model updates.
pub fn run_transfer_retune(cfg: &ExperimentConfig) -> Result<TransferReport> {
    cfg.validate()?;
    let source = cfg.checkpoint.as_deref().ok_or_else(|| Error::Config("no checkpoint".into()))?;
    let data = load_dataset(cfg)?;
    let mut writer = prepare_output(cfg, Some(&data))?;
    let t = &cfg.transfer;
    let policy = ProgrammingPolicy { epsilon: t.retune_epsilon, ..cfg.device.policy };
    let setup = device_setup(cfg, policy)?;
    let mut folds = Vec::new();
    for k in selected_folds(cfg, &data)? {
        let ckpt = load_checkpoint(&fold_stem(source, k))?;
        let fd = renormalize(&data, k, &ckpt.normalizer)?;
        let reference = evaluate(&ckpt.trainer.net, &fd.test)?;
        let degraded = degrade(&ckpt.trainer.net, t.levels, t.eta, rng::derive_seed(cfg.seed, &[rng::tag("transfer"), k as u64]))?;
        let degraded_eval = evaluate(&degraded, &fd.test)?;
        let schedule = LrSchedule { lr_initial: t.retune_lr, lr_final: t.retune_lr / 10.0, total_epochs: t.retune_epochs };
        let settings = TrainSettings {
            adam: cfg.training.adam,
            ..TrainSettings::full(t.retune_epochs, t.retune_batch_size, schedule, rng::derive_seed(cfg.seed, &[rng::tag("retune"), k as u64]))
        };
        let mut trainer = Trainer::new(degraded, settings, Some(setup))?;
        let (mut accs, mut events) = (Vec::new(), Vec::new());
        while !trainer.finished() {
            let s = trainer.train_epoch(&fd.train)?;
            let e = evaluate(&trainer.net, &fd.test)?;
            log::info!("fold {k} retune epoch {}: test {:.2}% events {}", s.epoch, e.accuracy, s.cumulative_events);
            accs.push(e.accuracy);
            events.push(s.cumulative_events);
        }
        let fold = TransferFold {
            fold: k,
            reference_accuracy: reference.accuracy,
            degraded_accuracy: degraded_eval.accuracy,
            retuned_accuracy: accs,
            retune_events: events,
        };
        writer.write("transfer_fold", &fold)?;
        folds.push(fold);
    }
    let mean = |f: &dyn Fn(&TransferFold) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>()).0;
    let report = TransferReport {
        levels: t.levels,
        eta: t.eta,
        mean_reference: mean(&|f| f.reference_accuracy),
        mean_degraded: mean(&|f| f.degraded_accuracy),
        mean_retuned: (0..t.retune_epochs).map(|e| mean(&|f| f.retuned_accuracy[e])).collect(),
        folds,
    };
    write_json(&cfg.output_dir.join("transfer.json"), &report)?;
    Ok(report)
}

/// Fold `k` normalized with a given normalizer instead of a fresh fit.
pub(crate) fn renormalize(data: &Dataset, k: usize, norm: &crate::data::Normalizer) -> Result<FoldData> {
    let mut fd = data.fold_raw(k)?;
    if &fd.normalizer != norm {
        log::warn!("fold {k}: checkpoint normalizer differs from this dataset's; using the checkpoint's");
    }
    for t in fd.train.iter_mut().chain(&mut fd.validation).chain(&mut fd.test) {
        norm.apply(t);
    }
    fd.normalizer = norm.clone();
    Ok(fd)
}

/// Loads the pretrained checkpoint for fold `k` of a run directory.
pub fn pretrained(dir: &Path, k: usize) -> Result<super::checkpoint::Checkpoint> {
    load_checkpoint(&fold_stem(dir, k))
}
