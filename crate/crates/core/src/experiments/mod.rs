//! Experiment regimes, run bookkeeping and the training loop.

mod bench;
mod checkpoint;
mod config;
mod dataset;
mod fit_device;
mod metrics;
mod runs;
mod sstl;
mod trainer;

pub use bench::{run_synth_bench, SweepPoint, SynthBenchReport};
pub use checkpoint::{checkpoint_exists, fold_stem, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{
    BenchConfig, DatasetConfig, DeviceConfig, ExperimentConfig, FitConfig, FoldConfig, NetworkConfig, Regime,
    SstlConfig, TrainingConfig, TransferConfig,
};
pub use dataset::{assert_subject_disjoint, load_dataset, Dataset, FoldData};
pub use fit_device::{run_fit_device, FitReport, KernelParamFile};
pub use metrics::{mean_std, read_json, write_curves, write_json, EpochRecord, FoldResult, MetricsWriter, RunManifest, RunMetrics};
pub use runs::{degrade, pretrained, run_training, run_transfer_retune, TransferFold, TransferReport};
pub use sstl::{chunk_ranges, run_sstl, SstlReport, SubjectResult};
pub use trainer::{evaluate, DeviceSetup, EpochStats, Evaluation, Fabric, Trainer, TrainSettings};

use serde::Serialize;

use crate::error::Result;

/// Result of whichever regime a config selects.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Training(RunMetrics),
    Sstl(SstlReport),
    Transfer(TransferReport),
    Fit(FitReport),
    Bench(SynthBenchReport),
}

impl Outcome {
    /// One-paragraph human summary.
    pub fn summary(&self) -> String {
        match self {
            Outcome::Training(m) => format!(
                "{}: test accuracy {:.2} ± {:.2}% over {} fold(s), {} programming events",
                m.regime,
                m.mean_test_accuracy,
                m.std_test_accuracy,
                m.folds.len(),
                m.total_events
            ),
            Outcome::Sstl(r) => format!(
                "sstl: {} subjects, pooled accuracy {:.2}% -> {:.2}%, {} programming events",
                r.subjects.len(),
                r.cumulative_before,
                r.cumulative_after,
                r.total_events
            ),
            Outcome::Transfer(r) => format!(
                "transfer: reference {:.2}%, degraded {:.2}%, re-tuned {}",
                r.mean_reference,
                r.mean_degraded,
                r.mean_retuned.iter().map(|a| format!("{a:.2}%")).collect::<Vec<_>>().join(" ")
            ),
            Outcome::Fit(r) => {
                let p = r.fit.params;
                format!(
                    "fit: A+={:.4} a+={:.3} b+={:.3} A-={:.4} a-={:.3} b-={:.3} (rms {:.2e} / {:.2e}, {} samples)",
                    p.a_plus,
                    p.alpha_plus,
                    p.beta_plus,
                    p.a_minus,
                    p.alpha_minus,
                    p.beta_minus,
                    r.fit.ltp.residual_rms,
                    r.fit.ltd.residual_rms,
                    r.fit.samples
                )
            }
            Outcome::Bench(b) => format!(
                "synth-bench: software {:.2}%, device {}, transfer {:.2}% -> {:.2}%",
                b.software_accuracy,
                b.device.iter().map(|p| format!("eps={} {:.2}% ({} events)", p.epsilon, p.accuracy, p.events)).collect::<Vec<_>>().join(", "),
                b.transfer.mean_degraded,
                b.transfer.mean_retuned.last().copied().unwrap_or(f64::NAN)
            ),
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    Ok(match cfg.regime {
        Regime::BaselineSoftware | Regime::OnDevice => Outcome::Training(run_training(cfg)?),
        Regime::Sstl => Outcome::Sstl(run_sstl(cfg)?),
        Regime::TransferRetune => Outcome::Transfer(run_transfer_retune(cfg)?),
        Regime::FitDevice => Outcome::Fit(run_fit_device(cfg)?),
        Regime::SynthBench => Outcome::Bench(run_synth_bench(cfg)?),
    })
}
