use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

fn level_value(k: usize, levels: usize, bound: f64) -> f64 {
    let span = (levels - 1) as f64;
    bound * (2.0 * k as f64 - span) / span
}

/// Snaps one weight to the nearest of `levels` uniformly spaced values on
/// `[-bound, bound]`. Midpoint ties go to the level with the larger
/// magnitude, and to the positive side when both are equally large.
pub fn quantize_value(w: f64, levels: usize, bound: f64) -> f64 {
    debug_assert!(levels >= 2);
    let span = (levels - 1) as f64;
    let u = ((w + bound) / (2.0 * bound) * span).clamp(0.0, span);
    let lo = u.floor();
    let frac = u - lo;
    let lo_k = lo as usize;
    let k = if lo_k + 1 >= levels || frac < 0.5 {
        lo_k
    } else if frac > 0.5 {
        lo_k + 1
    } else {
        let (a, b) = (level_value(lo_k, levels, bound), level_value(lo_k + 1, levels, bound));
        if b.abs() >= a.abs() {
            lo_k + 1
        } else {
            lo_k
        }
    };
    level_value(k, levels, bound)
}

/// Uniform-bin quantization of a weight tensor.
pub fn quantize(weights: &[f64], levels: usize, bound: f64) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::Config(format!("quantization needs at least 2 levels, got {levels}")));
    }
    Ok(weights.iter().map(|&w| quantize_value(w, levels, bound)).collect())
}

/// Adds i.i.d. Gaussian programming noise with std `eta` times the mean
/// magnitude of the distinct non-zero values present, then clamps to
/// `[-bound, bound]`.
pub fn add_program_noise<R: Rng + ?Sized>(
    weights: &[f64],
    eta: f64,
    bound: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("eta must be non-negative, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(weights.to_vec());
    }
    let mut distinct: Vec<f64> = weights.iter().copied().filter(|&w| w != 0.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.is_empty() {
        return Err(Error::NoiseScale);
    }
    let scale = distinct.iter().map(|v| v.abs()).sum::<f64>() / distinct.len() as f64;
    let noise = Normal::new(0.0, eta * scale).map_err(|e| Error::Config(e.to_string()))?;
    Ok(weights
        .iter()
        .map(|&w| (w + noise.sample(rng)).clamp(-bound, bound))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn three_levels() {
        let b = 0.3330;
        assert_eq!(quantize_value(0.1, 3, b), 0.0);
        assert_eq!(quantize_value(b, 3, b), b);
        assert_eq!(quantize_value(-b, 3, b), -b);
        assert_eq!(quantize_value(0.2, 3, b), b);
        // midpoint tie rounds away from zero
        assert_eq!(quantize_value(b / 2.0, 3, b), b);
        assert_eq!(quantize_value(-b / 2.0, 3, b), -b);
    }

    #[test]
    fn two_levels_preserve_sign() {
        let b = 0.5;
        let q = quantize(&[-0.3, -1e-9, 0.0, 1e-9, 0.4], 2, b).unwrap();
        assert_eq!(q, vec![-b, -b, b, b, b]);
    }

    #[test]
    fn rejects_single_level() {
        assert!(quantize(&[0.0], 1, 1.0).is_err());
    }

    #[test]
    fn zero_eta_is_identity() {
        let w = vec![0.1, -0.2, 0.0];
        assert_eq!(add_program_noise(&w, 0.0, 1.0, &mut rng::stream(0, &[])).unwrap(), w);
    }

    #[test]
    fn all_zero_tensor_has_no_noise_scale() {
        assert!(matches!(
            add_program_noise(&[0.0; 4], 0.1, 1.0, &mut rng::stream(0, &[])),
            Err(Error::NoiseScale)
        ));
    }

    #[test]
    fn noise_std_tracks_level_magnitude() {
        // large bound so clamping never engages
        let b = 0.25;
        let w: Vec<f64> = (0..100_000).map(|i| [b, -b, 0.0][i % 3]).collect();
        let noisy = add_program_noise(&w, 0.25, 100.0, &mut rng::stream(3, &[])).unwrap();
        let diffs: Vec<f64> = noisy.iter().zip(&w).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let target = 0.25 * b;
        assert!((var.sqrt() - target).abs() / target < 0.02);
    }

    proptest! {
        #[test]
        fn at_most_levels_values(ws in proptest::collection::vec(-1.0f64..1.0, 1..200), levels in 2usize..9) {
            let q = quantize(&ws, levels, 0.7).unwrap();
            let mut d = q.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            prop_assert!(d.len() <= levels);
            if levels % 2 == 1 {
                prop_assert_eq!(level_value((levels - 1) / 2, levels, 0.7), 0.0);
            }
            for (w, q) in ws.iter().zip(&q) {
                // nearest level: no grid point is strictly closer
                let step = 1.4 / (levels - 1) as f64;
                prop_assert!((w.clamp(-0.7, 0.7) - q).abs() <= step / 2.0 + 1e-12);
            }
        }
    }
}
