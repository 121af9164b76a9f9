//! Zero-phase Butterworth band-pass built from second-order sections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Section quality factors of a 4th-order Butterworth prototype.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_7];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator with `a0` normalized to 1: `[a1, a2]`.
    pub a: [f64; 2],
}

impl Biquad {
    fn design(kind: Kind, f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = match kind {
            Kind::Low => [(1.0 - cs) / 2.0, 1.0 - cs, (1.0 - cs) / 2.0],
            Kind::High => [(1.0 + cs) / 2.0, -(1.0 + cs), (1.0 + cs) / 2.0],
        };
        Self {
            b: b.map(|v| v / a0),
            a: [-2.0 * cs / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form-II state that holds a unit step at rest.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn response(&self, w: f64) -> f64 {
        let z1 = (-w).sin_cos();
        let z2 = (-2.0 * w).sin_cos();
        let re = |c: [f64; 3]| c[0] + c[1] * z1.1 + c[2] * z2.1;
        let im = |c: [f64; 3]| c[1] * z1.0 + c[2] * z2.0;
        let a = [1.0, self.a[0], self.a[1]];
        (re(self.b).hypot(im(self.b))) / (re(a).hypot(im(a)))
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
    /// Distance kept below Nyquist when `high_hz` sits at or above it.
    pub nyquist_margin_hz: f64,
}

impl BandpassSpec {
    pub fn eeg(fs: f64) -> Self {
        Self {
            low_hz: 0.1,
            high_hz: 80.0,
            fs,
            nyquist_margin_hz: 1.0,
        }
    }

    pub fn effective_high(&self) -> f64 {
        self.high_hz.min(self.fs / 2.0 - self.nyquist_margin_hz)
    }
}

/// Cascade of 4th-order high-pass and 4th-order low-pass sections.
#[derive(Clone, Debug, PartialEq)]
pub struct Bandpass {
    pub sections: Vec<Biquad>,
}

impl Bandpass {
    pub fn design(spec: &BandpassSpec) -> Result<Self> {
        let nyq = spec.fs / 2.0;
        let high = spec.effective_high();
        if !(spec.low_hz > 0.0 && spec.fs > 2.0 * spec.low_hz && high > spec.low_hz && high < nyq) {
            return Err(Error::Config(format!(
                "band {}–{} Hz not realizable at fs = {} Hz",
                spec.low_hz, spec.high_hz, spec.fs
            )));
        }
        if high != spec.high_hz {
            log::debug!("upper band edge {} Hz moved to {high} Hz below Nyquist", spec.high_hz);
        }
        let mut sections: Vec<Biquad> = BUTTER4_Q.iter().map(|&q| Biquad::design(Kind::High, spec.low_hz, spec.fs, q)).collect();
        sections.extend(BUTTER4_Q.iter().map(|&q| Biquad::design(Kind::Low, high, spec.fs, q)));
        Ok(Self { sections })
    }

    /// Edge extension used by [`Bandpass::filtfilt`].
    pub fn padlen(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Single-pass magnitude response at `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        self.sections.iter().map(|s| s.response(w)).product()
    }

    fn filter_in_place(&self, x: &mut [f64]) {
        let mut gain = 1.0;
        let x0 = x[0];
        for s in &self.sections {
            let [mut z1, mut z2] = s.step_state().map(|z| z * x0 * gain);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
            gain *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with odd reflection at both ends and
    /// steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.padlen();
        let n = x.len();
        if n <= pad {
            return Err(Error::FilterWarmup { len: n, needed: pad });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
        self.filter_in_place(&mut ext);
        ext.reverse();
        self.filter_in_place(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

pub fn bandpass(signal: &[f64], spec: &BandpassSpec) -> Result<Vec<f64>> {
    Bandpass::design(spec)?.filtfilt(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect()
    }

    #[test]
    fn dc_is_removed() {
        let y = bandpass(&vec![3.0; 2000], &BandpassSpec::eeg(160.0)).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 0.03), "{:?}", &y[..5]);
    }

    #[test]
    fn ten_hz_passes() {
        // the 0.1 Hz sections ring for tens of seconds, so probe mid-signal
        let y = bandpass(&sine(10.0, 160.0, 9600), &BandpassSpec::eeg(160.0)).unwrap();
        let peak = y[4000..5600].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.05, "{peak}");
    }

    #[test]
    fn response_band_shape() {
        let spec = BandpassSpec::eeg(160.0);
        let bp = Bandpass::design(&spec).unwrap();
        // forward-backward squares the single-pass magnitude
        let db = |f: f64| 20.0 * bp.magnitude(f, spec.fs).powi(2).log10();
        for f in [1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0] {
            assert!(db(f).abs() <= 1.0, "{f} Hz: {} dB", db(f));
        }
        assert!(db(0.001) <= -40.0);
        // −3 dB points of each single pass
        assert!((bp.magnitude(0.1, 160.0) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((bp.magnitude(79.0, 160.0) - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn white_noise_stays_finite() {
        let mut r = crate::rng::stream(1, &[]);
        let x: Vec<f64> = (0..5000).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = bandpass(&x, &BandpassSpec::eeg(160.0)).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!(var > 0.0 && var < 1.0);
    }

    #[test]
    fn short_signal_rejected() {
        let err = bandpass(&[0.0; 20], &BandpassSpec::eeg(160.0)).unwrap_err();
        assert!(matches!(err, Error::FilterWarmup { len: 20, needed: 27 }));
    }

    #[test]
    fn unrealizable_band() {
        let spec = BandpassSpec { low_hz: 50.0, high_hz: 80.0, fs: 100.0, nyquist_margin_hz: 1.0 };
        assert!(Bandpass::design(&spec).is_err());
    }
}
