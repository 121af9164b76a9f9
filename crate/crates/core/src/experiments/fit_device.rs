//! Device calibration from a pulse-programming log.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::write_json;
use super::runs::prepare_output;
use crate::device_model::{
    delta_w, derive_samples, fit_kernel_with, group_by_amplitude, level_statistics, read_pulse_log, FerroKernelParams,
    LevelStatistics, PolarityFit,
};
use crate::error::{Error, Result};

/// Kernel parameter file consumed by the device-mode regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParamFile {
    pub params: FerroKernelParams,
    pub ltp: PolarityFit,
    pub ltd: PolarityFit,
    pub samples: usize,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: KernelParamFile,
    pub levels: Vec<LevelStatistics>,
}

#[derive(Serialize)]
struct ResidualRow {
    polarity: String,
    w_before: f64,
    delta_w: f64,
    predicted: f64,
    residual: f64,
}

pub fn run_fit_device(cfg: &ExperimentConfig) -> Result<FitReport> {
    cfg.validate()?;
    let log_path = cfg.fit.log.as_deref().ok_or_else(|| Error::Config("fit.log is not set".into()))?;
    prepare_output(cfg, None)?;
    let f = std::fs::File::open(log_path).map_err(|e| Error::io(log_path, e))?;
    let records = read_pulse_log(std::io::BufReader::new(f))?;
    let levels = level_statistics(&group_by_amplitude(&records))?;
    let samples = derive_samples(&records, cfg.fit.convention, cfg.fit.normalization)?;
    let fit = fit_kernel_with(&samples, &cfg.fit.options)?;
    log::info!(
        "fitted {} samples: LTP rms {:.3e}, LTD rms {:.3e}",
        samples.len(),
        fit.ltp.residual_rms,
        fit.ltd.residual_rms
    );

    let out = &cfg.output_dir;
    let mut w = csv::Writer::from_path(out.join("fit_residuals.csv"))?;
    for s in &samples {
        let predicted = delta_w(s.w_before, s.polarity, &fit.params)?;
        w.serialize(ResidualRow {
            polarity: s.polarity.name().into(),
            w_before: s.w_before,
            delta_w: s.delta_w,
            predicted,
            residual: s.delta_w - predicted,
        })?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_path(out.join("level_statistics.csv"))?;
    for l in &levels {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    let file = KernelParamFile {
        params: fit.params,
        ltp: fit.ltp,
        ltd: fit.ltd,
        samples: samples.len(),
        source: log_path.display().to_string(),
    };
    write_json(&out.join("kernel_params.json"), &file)?;
    let report = FitReport { fit: file, levels };
    write_json(&out.join("fit_report.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::{synthesize_pulse_log, write_pulse_log, PulseLogSpec};
    use crate::experiments::config::Regime;

    #[test]
    fn recovers_constants_and_feeds_device_config() {
        let dir = tempfile::tempdir().unwrap();
        let truth = FerroKernelParams::MEASURED_DEVICE;
        let spec = PulseLogSpec { write_noise_std: 0.0, read_noise_std: 0.0, ..PulseLogSpec::default() };
        let log = dir.path().join("pulses.csv");
        write_pulse_log(std::fs::File::create(&log).unwrap(), &synthesize_pulse_log(&truth, &spec, 3).unwrap()).unwrap();
        let mut cfg = ExperimentConfig { regime: Regime::FitDevice, output_dir: dir.path().join("out"), ..Default::default() };
        cfg.fit.log = Some(log);
        cfg.fit.normalization = crate::device_model::ConductanceNormalization::Fixed { g_min: spec.g_min, g_max: spec.g_max };
        let r = run_fit_device(&cfg).unwrap();
        assert!((r.fit.params.alpha_plus - truth.alpha_plus).abs() < 0.05 * truth.alpha_plus, "{:?}", r.fit.params);
        assert!(!r.levels.is_empty());
        cfg.device.params_file = Some(cfg.output_dir.join("kernel_params.json"));
        assert_eq!(cfg.device.resolve_params().unwrap(), r.fit.params);
    }
}
