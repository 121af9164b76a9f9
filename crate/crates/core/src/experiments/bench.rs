//! Synthetic end-to-end benchmark: software training, a device-mode sweep
//! over the programming threshold, and quantized transfer with re-tuning.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Regime};
use super::metrics::{write_json, RunMetrics};
use super::runs::{run_training, run_transfer_retune, TransferReport};
use crate::error::Result;
use crate::weight_fabric::ProgrammingPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub accuracy: f64,
    pub events: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthBenchReport {
    pub software_accuracy: f64,
    pub software_curve: Vec<f64>,
    pub device: Vec<SweepPoint>,
    pub transfer: TransferReport,
}

pub fn run_synth_bench(cfg: &ExperimentConfig) -> Result<SynthBenchReport> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let sub = |regime: Regime, dir: &str| ExperimentConfig {
        regime,
        output_dir: out.join(dir),
        ..cfg.clone()
    };

    let software: RunMetrics = run_training(&sub(Regime::BaselineSoftware, "software"))?;
    let mut device = Vec::new();
    for &eps in &cfg.bench.epsilons {
        let mut c = sub(Regime::OnDevice, &format!("device_eps_{eps}"));
        c.device.policy = ProgrammingPolicy { epsilon: eps, ..cfg.device.policy };
        let m = run_training(&c)?;
        device.push(SweepPoint { epsilon: eps, accuracy: m.mean_test_accuracy, events: m.total_events });
    }
    let mut t = sub(Regime::TransferRetune, "transfer");
    t.checkpoint = Some(out.join("software"));
    t.resume = false;
    let transfer = run_transfer_retune(&t)?;

    let report = SynthBenchReport {
        software_accuracy: software.mean_test_accuracy,
        software_curve: software.epochs.iter().filter_map(|e| e.validation_accuracy).collect(),
        device,
        transfer,
    };
    write_json(&out.join("synth_bench.json"), &report)?;
    Ok(report)
}
