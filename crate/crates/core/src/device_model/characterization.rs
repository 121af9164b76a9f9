//! Ingestion of pulse-programming logs.
//!
//! A log is a delimited text table with one row per programming pulse:
//! `pulse_index, pulse_amplitude_V, pulse_width_us, read_conductance_S`, the
//! conductance being read right after the pulse.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fit::CharacterizationSample;
use super::kernel::{apply_pulse, FerroKernelParams, Polarity};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse_index: u64,
    #[serde(rename = "pulse_amplitude_V")]
    pub pulse_amplitude_v: f64,
    pub pulse_width_us: f64,
    #[serde(rename = "read_conductance_S")]
    pub read_conductance_s: f64,
}

const COLUMNS: [&str; 4] = [
    "pulse_index",
    "pulse_amplitude_V",
    "pulse_width_us",
    "read_conductance_S",
];

pub fn read_pulse_log<R: Read>(reader: R) -> Result<Vec<PulseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::LogParse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != COLUMNS.len() || headers.iter().zip(COLUMNS).any(|(h, c)| h != c) {
        return Err(Error::LogParse {
            line: 1,
            message: format!("expected columns {COLUMNS:?}, found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<PulseRecord>().enumerate() {
        // header is line 1
        let line = row + 2;
        let rec = rec.map_err(|e| Error::LogParse {
            line: e.position().map_or(line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !(rec.read_conductance_s.is_finite() && rec.pulse_amplitude_v.is_finite()) {
            return Err(Error::LogParse {
                line,
                message: "non-finite value".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pulse_log<W: Write>(writer: W, records: &[PulseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("pulse log", e))?;
    Ok(())
}

/// Which pulse sign potentiates the device.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositivePulse {
    #[default]
    Ltp,
    Ltd,
}

impl PositivePulse {
    fn polarity_of(self, amplitude: f64) -> Option<Polarity> {
        if amplitude == 0.0 {
            return None;
        }
        let positive = amplitude > 0.0;
        Some(match (self, positive) {
            (PositivePulse::Ltp, true) | (PositivePulse::Ltd, false) => Polarity::Ltp,
            _ => Polarity::Ltd,
        })
    }
}

/// How read conductances are mapped onto `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConductanceNormalization {
    /// Use the minimum and maximum conductance observed in the log.
    #[default]
    Observed,
    Fixed { g_min: f64, g_max: f64 },
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Turns consecutive reads into `(w_before, ΔW)` samples.
///
/// Polarity follows the pulse sign under `convention`. If the bulk of the
/// samples labelled LTD rise instead of fall, the log uses the opposite sign
/// convention and the labels are swapped so that LTD steps end up negative.
pub fn derive_samples(
    records: &[PulseRecord],
    convention: PositivePulse,
    normalization: ConductanceNormalization,
) -> Result<Vec<CharacterizationSample>> {
    if records.len() < 2 {
        return Err(Error::Calibration(format!(
            "pulse log has {} rows, need at least 2",
            records.len()
        )));
    }
    let (g_min, g_max) = match normalization {
        ConductanceNormalization::Observed => records.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), r| (lo.min(r.read_conductance_s), hi.max(r.read_conductance_s)),
        ),
        ConductanceNormalization::Fixed { g_min, g_max } => (g_min, g_max),
    };
    if !(g_max > g_min) {
        return Err(Error::Calibration(format!(
            "degenerate conductance range [{g_min}, {g_max}]"
        )));
    }
    let norm = |g: f64| ((g - g_min) / (g_max - g_min)).clamp(0.0, 1.0);

    let mut raw: Vec<(f64, f64, Polarity)> = Vec::new();
    for pair in records.windows(2) {
        let Some(pol) = convention.polarity_of(pair[1].pulse_amplitude_v) else {
            continue;
        };
        let before = norm(pair[0].read_conductance_s);
        raw.push((before, norm(pair[1].read_conductance_s) - before, pol));
    }
    let med = |pol: Polarity| median(raw.iter().filter(|s| s.2 == pol).map(|s| s.1).collect());
    if med(Polarity::Ltd) > 0.0 && med(Polarity::Ltp) <= 0.0 {
        log::warn!("pulse log uses the opposite polarity convention; swapping LTP/LTD labels");
        for s in &mut raw {
            s.2 = match s.2 {
                Polarity::Ltp => Polarity::Ltd,
                Polarity::Ltd => Polarity::Ltp,
            };
        }
    }
    raw.into_iter()
        .map(|(w, d, pol)| CharacterizationSample::new(w, d, pol))
        .collect()
}

/// Read conductances grouped by signed pulse amplitude (in volts, rounded to
/// the microvolt), ordered by amplitude.
pub fn group_by_amplitude(records: &[PulseRecord]) -> Vec<(f64, Vec<f64>)> {
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (r.pulse_amplitude_v * 1e6).round() as i64;
        groups.entry(key).or_default().push(r.read_conductance_s);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k as f64 * 1e-6, v))
        .collect()
}

/// Gaussian summary of the conductances programmed by one pulse amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStatistics {
    pub pulse_amplitude: f64,
    pub mean_conductance: f64,
    /// Unbiased sample standard deviation; absent with fewer than two reads.
    pub std_conductance: Option<f64>,
    pub sample_count: usize,
}

impl LevelStatistics {
    pub fn relative_std(&self) -> Option<f64> {
        self.std_conductance.map(|s| s / self.mean_conductance.abs())
    }
}

pub fn level_statistics(groups: &[(f64, Vec<f64>)]) -> Result<Vec<LevelStatistics>> {
    let mut out = groups
        .iter()
        .map(|(amp, reads)| {
            if reads.is_empty() {
                return Err(Error::Calibration(format!("no reads for amplitude {amp} V")));
            }
            let n = reads.len();
            let mean = reads.iter().sum::<f64>() / n as f64;
            let std = (n >= 2).then(|| {
                let ss: f64 = reads.iter().map(|g| (g - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            });
            Ok(LevelStatistics {
                pulse_amplitude: *amp,
                mean_conductance: mean,
                std_conductance: std,
                sample_count: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.pulse_amplitude.total_cmp(&b.pulse_amplitude));
    Ok(out)
}

/// Parameters of a synthetic characterization run: repeated potentiation
/// ramps followed by depression ramps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseLogSpec {
    pub cycles: usize,
    pub ltp_pulses: usize,
    pub ltd_pulses: usize,
    pub amplitude_step_v: f64,
    pub pulse_width_us: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub initial_w: f64,
    /// Std of additive noise on the normalized state after each pulse.
    pub write_noise_std: f64,
    /// Std of additive noise on each read, relative to `g_max − g_min`.
    pub read_noise_std: f64,
    pub convention: PositivePulse,
}

impl Default for PulseLogSpec {
    fn default() -> Self {
        Self {
            cycles: 10,
            ltp_pulses: 40,
            ltd_pulses: 40,
            amplitude_step_v: 0.05,
            pulse_width_us: 50.0,
            // 100 MΩ .. 10 MΩ
            g_min: 1e-8,
            g_max: 1e-7,
            initial_w: 0.02,
            write_noise_std: 0.0,
            read_noise_std: 0.0,
            convention: PositivePulse::Ltp,
        }
    }
}

pub fn synthesize_pulse_log(params: &FerroKernelParams, spec: &PulseLogSpec, seed: u64) -> Result<Vec<PulseRecord>> {
    let mut write_rng = rng::stream(seed, &[rng::tag("write")]);
    let mut read_rng = rng::stream(seed, &[rng::tag("read")]);
    let read_noise = Normal::new(0.0, spec.read_noise_std * (spec.g_max - spec.g_min))
        .map_err(|e| Error::Config(e.to_string()))?;
    let read = |w: f64, r: &mut rng::Stream| {
        let g = spec.g_min + w * (spec.g_max - spec.g_min);
        if spec.read_noise_std > 0.0 {
            g + read_noise.sample(r)
        } else {
            g
        }
    };
    let ltp_sign = match spec.convention {
        PositivePulse::Ltp => 1.0,
        PositivePulse::Ltd => -1.0,
    };
    let mut w = spec.initial_w;
    let mut out = vec![PulseRecord {
        pulse_index: 0,
        pulse_amplitude_v: 0.0,
        pulse_width_us: 0.0,
        read_conductance_s: read(w, &mut read_rng),
    }];
    for _ in 0..spec.cycles {
        for (pol, count) in [(Polarity::Ltp, spec.ltp_pulses), (Polarity::Ltd, spec.ltd_pulses)] {
            for k in 1..=count {
                w = apply_pulse(w, pol, params, spec.write_noise_std, &mut write_rng)?;
                let sign = if pol == Polarity::Ltp { ltp_sign } else { -ltp_sign };
                out.push(PulseRecord {
                    pulse_index: out.len() as u64,
                    pulse_amplitude_v: sign * spec.amplitude_step_v * k as f64,
                    pulse_width_us: spec.pulse_width_us,
                    read_conductance_s: read(w, &mut read_rng),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::fit_kernel;

    #[test]
    fn constant_group_has_zero_std() {
        let stats = level_statistics(&[(0.5, vec![10.0, 10.0, 10.0])]).unwrap();
        assert_eq!(stats[0].mean_conductance, 10.0);
        assert_eq!(stats[0].std_conductance, Some(0.0));
    }

    #[test]
    fn single_read_has_absent_std() {
        let stats = level_statistics(&[(0.5, vec![3.0])]).unwrap();
        assert_eq!(stats[0].std_conductance, None);
        assert!(level_statistics(&[(0.1, vec![])]).is_err());
    }

    #[test]
    fn groups_are_ordered_by_amplitude() {
        let stats = level_statistics(&[(0.3, vec![1.0, 2.0]), (-0.2, vec![4.0, 4.0]), (0.1, vec![1.0, 1.0])]).unwrap();
        let amps: Vec<f64> = stats.iter().map(|s| s.pulse_amplitude).collect();
        assert_eq!(amps, vec![-0.2, 0.1, 0.3]);
    }

    #[test]
    fn gaussian_group_std() {
        let mut r = rng::stream(11, &[]);
        let n = Normal::new(50.0, 2.0).unwrap();
        let reads: Vec<f64> = (0..1000).map(|_| n.sample(&mut r)).collect();
        let s = level_statistics(&[(1.0, reads)]).unwrap()[0];
        let std = s.std_conductance.unwrap();
        assert!((1.8..=2.2).contains(&std), "std {std}");
    }

    #[test]
    fn log_roundtrip_and_schema_errors() {
        let recs = synthesize_pulse_log(&FerroKernelParams::default(), &PulseLogSpec { cycles: 1, ..Default::default() }, 1).unwrap();
        let mut buf = Vec::new();
        write_pulse_log(&mut buf, &recs).unwrap();
        let back = read_pulse_log(buf.as_slice()).unwrap();
        assert_eq!(back.len(), recs.len());

        let bad = "pulse_index,amp,width,g\n0,0,0,1\n";
        assert!(matches!(read_pulse_log(bad.as_bytes()), Err(Error::LogParse { line: 1, .. })));
        let bad_row = "pulse_index,pulse_amplitude_V,pulse_width_us,read_conductance_S\n0,0.1,50,1e-8\n1,abc,50,1e-8\n";
        match read_pulse_log(bad_row.as_bytes()) {
            Err(Error::LogParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_log_is_a_calibration_error() {
        assert!(matches!(
            derive_samples(&[], PositivePulse::Ltp, ConductanceNormalization::Observed),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn synthetic_log_recovers_parameters() {
        let truth = FerroKernelParams::MEASURED_DEVICE;
        let spec = PulseLogSpec::default();
        let recs = synthesize_pulse_log(&truth, &spec, 3).unwrap();
        let samples = derive_samples(
            &recs,
            PositivePulse::Ltp,
            ConductanceNormalization::Fixed { g_min: spec.g_min, g_max: spec.g_max },
        )
        .unwrap();
        let fit = fit_kernel(&samples).unwrap();
        assert!(((fit.params.a_plus - truth.a_plus) / truth.a_plus).abs() < 0.05);
        assert!(((fit.params.alpha_minus - truth.alpha_minus) / truth.alpha_minus).abs() < 0.05);
    }

    #[test]
    fn opposite_convention_is_detected() {
        let truth = FerroKernelParams::MEASURED_DEVICE;
        let spec = PulseLogSpec { convention: PositivePulse::Ltd, cycles: 2, ..Default::default() };
        let recs = synthesize_pulse_log(&truth, &spec, 3).unwrap();
        let samples = derive_samples(&recs, PositivePulse::Ltp, ConductanceNormalization::Observed).unwrap();
        let ltd: Vec<_> = samples.iter().filter(|s| s.polarity == Polarity::Ltd).collect();
        assert!(ltd.iter().all(|s| s.delta_w <= 0.0));
    }
}
