use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Potentiation, conductance increases.
    Ltp,
    /// Depression, conductance decreases.
    Ltd,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Ltp => "LTP",
            Polarity::Ltd => "LTD",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Polarity::Ltp => 1.0,
            Polarity::Ltd => -1.0,
        }
    }
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `x^e` for `x ∈ [0, 1]`, evaluated as `exp(e·ln x)` with the endpoints
/// handled explicitly so that `ln 0` is never taken.
fn unit_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else if x == 1.0 || e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Unsigned magnitude law `A·W^(α−1)·(1−W)^(β−1)` for one polarity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaKernel {
    pub amplitude: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BetaKernel {
    pub fn new(amplitude: f64, alpha: f64, beta: f64) -> Self {
        Self {
            amplitude,
            alpha,
            beta,
        }
    }

    /// The unscaled shape `W^(α−1)·(1−W)^(β−1)`.
    pub fn shape(&self, w: f64) -> f64 {
        unit_pow(w, self.alpha - 1.0) * unit_pow(1.0 - w, self.beta - 1.0)
    }

    pub fn magnitude(&self, w: f64) -> f64 {
        self.amplitude * self.shape(w)
    }

    /// Location of the maximum step, `(α−1)/(α+β−2)`, defined for α, β > 1.
    pub fn peak_location(&self) -> f64 {
        (self.alpha - 1.0) / (self.alpha + self.beta - 2.0)
    }

    fn validate(&self, polarity: Polarity) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.amplitude) && ok(self.alpha) && ok(self.beta)) {
            return Err(Error::InvalidKernel(format!(
                "{polarity} parameters must be finite and strictly positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// The six fitted constants of the LTP/LTD conductance-update kernels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FerroKernelParams {
    pub a_plus: f64,
    pub alpha_plus: f64,
    pub beta_plus: f64,
    pub a_minus: f64,
    pub alpha_minus: f64,
    pub beta_minus: f64,
}

impl FerroKernelParams {
    /// Constants calibrated on the characterized HZO device.
    pub const MEASURED_DEVICE: FerroKernelParams = FerroKernelParams {
        a_plus: 0.1761,
        alpha_plus: 1.81,
        beta_plus: 2.12,
        a_minus: 0.3300,
        alpha_minus: 2.47,
        beta_minus: 1.79,
    };

    pub fn from_kernels(ltp: BetaKernel, ltd: BetaKernel) -> Result<Self> {
        let params = Self {
            a_plus: ltp.amplitude,
            alpha_plus: ltp.alpha,
            beta_plus: ltp.beta,
            a_minus: ltd.amplitude,
            alpha_minus: ltd.alpha,
            beta_minus: ltd.beta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn kernel(&self, polarity: Polarity) -> BetaKernel {
        match polarity {
            Polarity::Ltp => BetaKernel::new(self.a_plus, self.alpha_plus, self.beta_plus),
            Polarity::Ltd => BetaKernel::new(self.a_minus, self.alpha_minus, self.beta_minus),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel(Polarity::Ltp).validate(Polarity::Ltp)?;
        self.kernel(Polarity::Ltd).validate(Polarity::Ltd)
    }

    /// True when both kernels vanish at W = 0 and W = 1.
    pub fn has_pinned_endpoints(&self) -> bool {
        [self.alpha_plus, self.beta_plus, self.alpha_minus, self.beta_minus]
            .iter()
            .all(|&x| x > 1.0)
    }
}

impl Default for FerroKernelParams {
    fn default() -> Self {
        Self::MEASURED_DEVICE
    }
}

/// Signed conductance step produced by one pulse at normalized state `w`.
pub fn delta_w(w: f64, polarity: Polarity, params: &FerroKernelParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain { value: w });
    }
    let step = polarity.sign() * params.kernel(polarity).magnitude(w);
    if !step.is_finite() {
        return Err(Error::InvalidKernel(format!(
            "{polarity} step at w={w} is not finite for {params:?}"
        )));
    }
    Ok(step)
}

/// Applies one programming pulse: kernel step, optional additive Gaussian
/// write noise, then clamping back into `[0, 1]`.
///
/// No random number is drawn when `write_noise_std` is zero.
pub fn apply_pulse<R: Rng + ?Sized>(
    w: f64,
    polarity: Polarity,
    params: &FerroKernelParams,
    write_noise_std: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(write_noise_std >= 0.0 && write_noise_std.is_finite()) {
        return Err(Error::Config(format!(
            "write noise std must be finite and non-negative, got {write_noise_std}"
        )));
    }
    let mut next = w + delta_w(w, polarity, params)?;
    if write_noise_std > 0.0 {
        let noise = Normal::new(0.0, write_noise_std).expect("validated std");
        next += noise.sample(rng);
    }
    Ok(next.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    const P: FerroKernelParams = FerroKernelParams::MEASURED_DEVICE;

    #[test]
    fn endpoints_are_pinned() {
        for pol in [Polarity::Ltp, Polarity::Ltd] {
            assert_eq!(delta_w(0.0, pol, &P).unwrap(), 0.0);
            assert_eq!(delta_w(1.0, pol, &P).unwrap(), 0.0);
        }
    }

    #[test]
    fn midpoint_ltp_step() {
        // 0.1761 * 0.5^1.93, evaluated with 40-digit arithmetic
        let got = delta_w(0.5, Polarity::Ltp, &P).unwrap();
        assert!((got - 0.046_213_776_996_505_54).abs() < 1e-15);
    }

    #[test]
    fn ltp_peak_matches_grid_search() {
        let kernel = P.kernel(Polarity::Ltp);
        let (mut best_w, mut best) = (0.0, f64::MIN);
        for k in 0..=100_000 {
            let w = k as f64 * 1e-5;
            let v = kernel.magnitude(w);
            if v > best {
                best = v;
                best_w = w;
            }
        }
        assert!((best_w - 0.419_689_119_170_984_5).abs() <= 1e-5);
        assert!((kernel.peak_location() - 0.419_689_119_170_984_5).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_is_a_domain_error() {
        assert!(matches!(
            delta_w(1.0001, Polarity::Ltp, &P),
            Err(Error::Domain { .. })
        ));
        assert!(delta_w(-1e-9, Polarity::Ltd, &P).is_err());
    }

    #[test]
    fn pulse_examples() {
        let mut r = rng::stream(0, &[]);
        let w = apply_pulse(0.5, Polarity::Ltp, &P, 0.0, &mut r).unwrap();
        assert!((w - 0.5462).abs() < 1e-4);
        assert_eq!(apply_pulse(1.0, Polarity::Ltp, &P, 0.0, &mut r).unwrap(), 1.0);
        assert!(apply_pulse(0.02, Polarity::Ltd, &P, 0.0, &mut r).unwrap() >= 0.0);
    }

    #[test]
    fn repeated_ltp_pulses_saturate_monotonically() {
        let mut r = rng::stream(0, &[]);
        let mut w = 0.01;
        let mut steps = Vec::new();
        for _ in 0..200 {
            let next = apply_pulse(w, Polarity::Ltp, &P, 0.0, &mut r).unwrap();
            assert!(next >= w);
            steps.push(next - w);
            w = next;
        }
        assert!(w > 0.99);
        // growing steps early, shrinking once past the kernel peak
        assert!(steps[5] > steps[0]);
        assert!(steps[199] < steps[20]);
    }

    #[test]
    fn rejects_non_positive_params() {
        let mut bad = P;
        bad.alpha_minus = 0.0;
        assert!(bad.validate().is_err());
        assert!(P.validate().is_ok());
        assert!(P.has_pinned_endpoints());
    }

    proptest! {
        #[test]
        fn step_signs(w in 0.0f64..=1.0) {
            prop_assert!(delta_w(w, Polarity::Ltp, &P).unwrap() >= 0.0);
            prop_assert!(delta_w(w, Polarity::Ltd, &P).unwrap() <= 0.0);
        }

        #[test]
        fn pulse_stays_in_range(w in 0.0f64..=1.0, ltp in any::<bool>(), std in 0.0f64..0.5, seed in any::<u64>()) {
            let pol = if ltp { Polarity::Ltp } else { Polarity::Ltd };
            let mut r = rng::stream(seed, &[]);
            let next = apply_pulse(w, pol, &P, std, &mut r).unwrap();
            prop_assert!((0.0..=1.0).contains(&next));
        }
    }
}
