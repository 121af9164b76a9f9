//! Run configuration, loadable from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CorpusOptions, SynthSpec};
use crate::device_model::{ConductanceNormalization, FerroKernelParams, FitOptions, PositivePulse};
use crate::error::{Error, Result};
use crate::optimizer::{AdamConfig, LrSchedule};
use crate::snn::{Layer, NetworkSpec, NeuronConfig};
use crate::weight_fabric::ProgrammingPolicy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    BaselineSoftware,
    OnDevice,
    Sstl,
    TransferRetune,
    FitDevice,
    SynthBench,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::BaselineSoftware => "baseline_software",
            Regime::OnDevice => "on_device",
            Regime::Sstl => "sstl",
            Regime::TransferRetune => "transfer_retune",
            Regime::FitDevice => "fit_device",
            Regime::SynthBench => "synth_bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Generated grid recordings. With `held_out_subjects == 0` the train,
    /// validation and test trials come from one pool; otherwise test trials
    /// belong to extra subjects never seen in training.
    Synthetic {
        #[serde(default)]
        spec: SynthSpec,
        train: usize,
        #[serde(default)]
        validation: usize,
        test: usize,
        #[serde(default)]
        held_out_subjects: u32,
    },
    /// A directory of `SxxxRyy.edf` recordings.
    Physionet {
        root: PathBuf,
        /// Electrode layout JSON; the bundled 10×11 layout when absent.
        #[serde(default)]
        layout: Option<PathBuf>,
        /// Trial cache stem; written on first load and reused afterwards.
        #[serde(default)]
        cache: Option<PathBuf>,
        #[serde(default)]
        options: CorpusOptions,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic { spec: SynthSpec::default(), train: 400, validation: 0, test: 200, held_out_subjects: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Hidden widths are divided by this; 1 is the full architecture.
    pub width_divisor: usize,
    pub neuron: NeuronConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { width_divisor: 1, neuron: NeuronConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let s = LrSchedule::new(20);
        Self { epochs: 20, batch_size: 64, lr_initial: s.lr_initial, lr_final: s.lr_final, adam: AdamConfig::default() }
    }
}

impl TrainingConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { lr_initial: self.lr_initial, lr_final: self.lr_final, total_epochs: self.epochs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub params: FerroKernelParams,
    /// Kernel parameter file written by `fit-device`; overrides `params`.
    pub params_file: Option<PathBuf>,
    pub policy: ProgrammingPolicy,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self { params: FerroKernelParams::MEASURED_DEVICE, params_file: None, policy: ProgrammingPolicy::default() }
    }
}

impl DeviceConfig {
    pub fn resolve_params(&self) -> Result<FerroKernelParams> {
        let Some(path) = &self.params_file else { return Ok(self.params) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: super::fit_device::KernelParamFile = serde_json::from_str(&text)?;
        file.params.validate()?;
        Ok(file.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldConfig {
    pub count: usize,
    pub validation_fraction: f64,
    /// Run only these fold indices.
    pub only: Option<Vec<usize>>,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self { count: 5, validation_fraction: 0.2, only: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SstlConfig {
    pub layers: Vec<Layer>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub lr_final_ratio: f64,
    /// Contiguous chunks per subject; each is predicted by a model tuned on the rest.
    pub chunks: usize,
    /// Restrict to these test subjects.
    pub subjects: Option<Vec<u32>>,
    /// Use device-model updates during tuning.
    pub on_device: bool,
}

impl Default for SstlConfig {
    fn default() -> Self {
        Self {
            layers: vec![Layer::Fc1, Layer::Fc2],
            epochs: 5,
            batch_size: 1,
            lr: 6e-4,
            lr_final_ratio: 0.1,
            chunks: 4,
            subjects: None,
            on_device: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Programmable levels per synapse; `None` keeps full precision.
    pub levels: Option<usize>,
    /// Programming noise std as a fraction of the smallest level spacing.
    pub eta: f64,
    pub retune_epochs: usize,
    pub retune_epsilon: f64,
    pub retune_lr: f64,
    pub retune_batch_size: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { levels: Some(3), eta: 0.0, retune_epochs: 4, retune_epsilon: 0.025, retune_lr: 1e-4, retune_batch_size: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub log: Option<PathBuf>,
    pub convention: PositivePulse,
    pub normalization: ConductanceNormalization,
    pub options: FitOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            log: None,
            convention: PositivePulse::default(),
            normalization: ConductanceNormalization::default(),
            options: FitOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Device thresholds swept in the on-device benchmark.
    pub epsilons: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { epsilons: vec![0.025, 0.05, 0.075] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Pretrained checkpoint directory (one `fold_<k>` subdirectory per fold),
    /// required by `sstl` and `transfer_retune`.
    pub checkpoint: Option<PathBuf>,
    /// Continue from the last epoch checkpoint in `output_dir`.
    pub resume: bool,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub device: DeviceConfig,
    pub folds: FoldConfig,
    pub sstl: SstlConfig,
    pub transfer: TransferConfig,
    pub fit: FitConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: Regime::default(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
            checkpoint: None,
            resume: false,
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            device: DeviceConfig::default(),
            folds: FoldConfig::default(),
            sstl: SstlConfig::default(),
            transfer: TransferConfig::default(),
            fit: FitConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the keys present in `overlay` on top of this config; tables
    /// merge recursively, everything else is replaced.
    pub fn overlaid(&self, overlay: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let top: toml::Value = toml::from_str(overlay).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, top);
        base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn timesteps(&self) -> usize {
        match &self.dataset {
            DatasetConfig::Synthetic { spec, .. } => spec.timesteps,
            DatasetConfig::Physionet { options, .. } => {
                (options.window.length_s * options.expected_rate).round() as usize
            }
        }
    }

    pub fn network_spec(&self, rows: usize, cols: usize) -> NetworkSpec {
        let spec = NetworkSpec { input_rows: rows, input_cols: cols, ..NetworkSpec::reference(self.timesteps()) };
        spec.scaled(self.network.width_divisor)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.training;
        if t.batch_size == 0 {
            return bad("training.batch_size must be positive".into());
        }
        if !(t.lr_initial >= 0.0 && t.lr_final >= 0.0) {
            return bad(format!("learning rates must be non-negative, got {} and {}", t.lr_initial, t.lr_final));
        }
        if self.network.width_divisor == 0 {
            return bad("network.width_divisor must be at least 1".into());
        }
        if self.timesteps() == 0 {
            return bad("trial window has no timesteps".into());
        }
        match &self.dataset {
            DatasetConfig::Synthetic { train, test, .. } if *train == 0 || *test == 0 => {
                return bad("synthetic dataset needs train and test trials".into());
            }
            DatasetConfig::Physionet { root, .. } if root.as_os_str().is_empty() => {
                return bad("dataset.root is empty".into());
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.folds.validation_fraction) {
            return bad(format!("folds.validation_fraction {} outside [0, 1)", self.folds.validation_fraction));
        }
        match self.regime {
            Regime::OnDevice | Regime::SynthBench => self.device.policy.validate()?,
            Regime::Sstl => {
                if self.checkpoint.is_none() {
                    return bad("sstl needs a pretrained checkpoint".into());
                }
                if self.sstl.layers.is_empty() {
                    return bad("sstl.layers is empty".into());
                }
                if self.sstl.chunks < 2 || self.sstl.batch_size == 0 {
                    return bad("sstl needs at least 2 chunks and a positive batch size".into());
                }
                if self.sstl.on_device {
                    self.device.policy.validate()?;
                }
            }
            Regime::TransferRetune => {
                if self.checkpoint.is_none() {
                    return bad("transfer_retune needs a pretrained checkpoint".into());
                }
                if self.transfer.levels.is_some_and(|l| l < 2) {
                    return bad("transfer.levels must be at least 2".into());
                }
                if !(self.transfer.eta >= 0.0) {
                    return bad(format!("transfer.eta must be non-negative, got {}", self.transfer.eta));
                }
                ProgrammingPolicy { epsilon: self.transfer.retune_epsilon, ..self.device.policy }.validate()?;
            }
            Regime::FitDevice => {
                if self.fit.log.is_none() {
                    return bad("fit_device needs fit.log".into());
                }
            }
            Regime::BaselineSoftware => {}
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
