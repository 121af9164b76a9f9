//! Least-squares calibration of the Beta kernel.
//!
//! Each polarity is fitted independently. The amplitude enters linearly, so a
//! coarse grid over the two shape exponents with the amplitude solved in
//! closed form gives a starting point, which Levenberg–Marquardt then refines
//! over all three parameters.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::kernel::{BetaKernel, FerroKernelParams, Polarity};
use crate::error::{Error, Result};

/// One observed pulse response: state before the pulse and the signed change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationSample {
    pub w_before: f64,
    pub delta_w: f64,
    pub polarity: Polarity,
}

impl CharacterizationSample {
    pub fn new(w_before: f64, delta_w: f64, polarity: Polarity) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_before) {
            return Err(Error::Domain { value: w_before });
        }
        if !delta_w.is_finite() {
            return Err(Error::Calibration(format!("non-finite delta_w at w={w_before}")));
        }
        Ok(Self {
            w_before,
            delta_w,
            polarity,
        })
    }

    /// Builds a sample from an unsigned step, applying the model's sign
    /// convention (LTD steps are negative).
    pub fn from_magnitude(w_before: f64, magnitude: f64, polarity: Polarity) -> Result<Self> {
        Self::new(w_before, polarity.sign() * magnitude.abs(), polarity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Grid points per shape exponent in the initialization sweep.
    pub grid_points: usize,
    pub exponent_range: (f64, f64),
    pub max_iterations: usize,
    pub min_samples: usize,
    /// The samples must reach at least this low and this high in `w_before`.
    pub required_span: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_points: 60,
            exponent_range: (1.05, 4.0),
            max_iterations: 500,
            min_samples: 10,
            required_span: (0.1, 0.9),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarityFit {
    pub polarity: Polarity,
    pub kernel: BetaKernel,
    pub residual_rms: f64,
    pub iterations: usize,
    pub samples: usize,
}

/// Result of calibrating both polarities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub params: FerroKernelParams,
    pub ltp: PolarityFit,
    pub ltd: PolarityFit,
}

pub fn fit_kernel(samples: &[CharacterizationSample]) -> Result<KernelFit> {
    fit_kernel_with(samples, &FitOptions::default())
}

pub fn fit_kernel_with(samples: &[CharacterizationSample], opts: &FitOptions) -> Result<KernelFit> {
    let points = |pol: Polarity| -> Vec<(f64, f64)> {
        samples
            .iter()
            .filter(|s| s.polarity == pol)
            .map(|s| (s.w_before, pol.sign() * s.delta_w))
            .collect()
    };
    let ltp = fit_polarity(Polarity::Ltp, &points(Polarity::Ltp), opts)?;
    let ltd = fit_polarity(Polarity::Ltd, &points(Polarity::Ltd), opts)?;
    let params = FerroKernelParams::from_kernels(ltp.kernel, ltd.kernel)?;
    Ok(KernelFit { params, ltp, ltd })
}

/// Fits `A·w^(α−1)·(1−w)^(β−1)` to `(w, magnitude)` pairs.
pub fn fit_polarity(polarity: Polarity, points: &[(f64, f64)], opts: &FitOptions) -> Result<PolarityFit> {
    if points.len() < opts.min_samples {
        return Err(Error::Calibration(format!(
            "{polarity}: {} samples, need at least {}",
            points.len(),
            opts.min_samples
        )));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if lo > opts.required_span.0 || hi < opts.required_span.1 {
        return Err(Error::Calibration(format!(
            "{polarity}: samples span [{lo:.3}, {hi:.3}], need to cover [{}, {}]",
            opts.required_span.0, opts.required_span.1
        )));
    }
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.0) || !p.1.is_finite()) {
        return Err(Error::Calibration(format!("{polarity}: sample outside [0, 1] or non-finite")));
    }

    let start = grid_start(points, opts);
    let (kernel, sse, iterations, converged) = levenberg_marquardt(points, start, opts.max_iterations);
    let residual_rms = (sse / points.len() as f64).sqrt();
    if !converged {
        return Err(Error::FitNotConverged {
            polarity: polarity.name(),
            iterations,
            rms: residual_rms,
            best: match polarity {
                Polarity::Ltp => FerroKernelParams {
                    a_plus: kernel.amplitude,
                    alpha_plus: kernel.alpha,
                    beta_plus: kernel.beta,
                    ..FerroKernelParams::default()
                },
                Polarity::Ltd => FerroKernelParams {
                    a_minus: kernel.amplitude,
                    alpha_minus: kernel.alpha,
                    beta_minus: kernel.beta,
                    ..FerroKernelParams::default()
                },
            },
        });
    }
    if !(kernel.amplitude > 0.0 && kernel.alpha > 0.0 && kernel.beta > 0.0) {
        return Err(Error::Calibration(format!(
            "{polarity}: fitted parameters violate positivity: {kernel:?}"
        )));
    }
    Ok(PolarityFit {
        polarity,
        kernel,
        residual_rms,
        iterations,
        samples: points.len(),
    })
}

/// Best `(A, α, β)` over the exponent grid, with `A` solved by linear least
/// squares at every grid node.
fn grid_start(points: &[(f64, f64)], opts: &FitOptions) -> BetaKernel {
    let (lo, hi) = opts.exponent_range;
    let n = opts.grid_points.max(2);
    let node = |k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let mut best = (f64::INFINITY, BetaKernel::new(0.0, 2.0, 2.0));
    for ia in 0..n {
        for ib in 0..n {
            let shape = BetaKernel::new(1.0, node(ia), node(ib));
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for &(w, y) in points {
                let phi = shape.shape(w);
                sxy += phi * y;
                sxx += phi * phi;
                syy += y * y;
            }
            if sxx <= 0.0 || sxy <= 0.0 {
                continue;
            }
            let sse = syy - sxy * sxy / sxx;
            if sse < best.0 {
                best = (sse, BetaKernel::new(sxy / sxx, shape.alpha, shape.beta));
            }
        }
    }
    best.1
}

fn sse(points: &[(f64, f64)], k: &BetaKernel) -> f64 {
    points
        .iter()
        .map(|&(w, y)| {
            let r = k.magnitude(w) - y;
            r * r
        })
        .sum()
}

const EXPONENT_FLOOR: f64 = 1.0 + 1e-9;
const EXPONENT_CEIL: f64 = 50.0;

fn levenberg_marquardt(
    points: &[(f64, f64)],
    start: BetaKernel,
    max_iterations: usize,
) -> (BetaKernel, f64, usize, bool) {
    let mut k = start;
    let mut cost = sse(points, &k);
    let mut lambda = 1e-3;
    for iter in 1..=max_iterations {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &(w, y) in points {
            let phi = k.shape(w);
            let f = k.amplitude * phi;
            // at the pinned endpoints phi = 0 and the log factors are irrelevant
            let (da, db) = if phi == 0.0 {
                (0.0, 0.0)
            } else {
                (f * w.ln(), f * (1.0 - w).ln())
            };
            let j = Vector3::new(phi, da, db);
            jtj += j * j.transpose();
            jtr += j * (f - y);
        }
        if cost == 0.0 || jtr.amax() <= 1e-300 {
            return (k, cost, iter, true);
        }
        loop {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let step = damped.lu().solve(&(-jtr));
            let Some(step) = step.filter(|s| s.iter().all(|x| x.is_finite())) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return (k, cost, iter, true);
                }
                continue;
            };
            let trial = BetaKernel::new(
                k.amplitude + step[0],
                (k.alpha + step[1]).clamp(EXPONENT_FLOOR, EXPONENT_CEIL),
                (k.beta + step[2]).clamp(EXPONENT_FLOOR, EXPONENT_CEIL),
            );
            let trial_cost = sse(points, &trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel_step = (step[0] / k.amplitude.abs().max(1e-300)).abs()
                    .max((step[1] / k.alpha).abs())
                    .max((step[2] / k.beta).abs());
                let improvement = cost - trial_cost;
                k = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                if rel_step < 1e-13 || improvement <= 1e-15 * cost || cost < 1e-28 {
                    return (k, cost, iter, true);
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                // no descent direction left at machine precision
                return (k, cost, iter, true);
            }
        }
    }
    (k, cost, max_iterations, false)
}
