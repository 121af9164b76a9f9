use serde::{Deserialize, Serialize};

/// Normalized conductance of the fixed reference device.
pub const W_MINUS_REF: f64 = 0.5;

/// Fan-in dependent weight bound `1/sqrt(fan_in)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerBound {
    pub fan_in: usize,
    pub bound: f64,
}

impl LayerBound {
    pub fn from_fan_in(fan_in: usize) -> Self {
        assert!(fan_in > 0, "fan-in must be positive");
        Self {
            fan_in,
            bound: 1.0 / (fan_in as f64).sqrt(),
        }
    }

    pub fn clamp(&self, w: f64) -> f64 {
        w.clamp(-self.bound, self.bound)
    }

    /// Full weight range `2·bound`.
    pub fn range(&self) -> f64 {
        2.0 * self.bound
    }
}

/// Weight to active-device conductance. The weight is clamped to the layer
/// bound first, so the result is always in `[0, 1]`.
pub fn map_to_device(w_snn: f64, bound: &LayerBound) -> f64 {
    0.5 * bound.clamp(w_snn) / bound.bound + W_MINUS_REF
}

pub fn map_from_device(w_plus: f64, bound: &LayerBound) -> f64 {
    (w_plus - W_MINUS_REF) * 2.0 * bound.bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_and_endpoints() {
        let b = LayerBound::from_fan_in(9);
        assert_eq!(map_to_device(0.0, &b), 0.5);
        assert_eq!(map_to_device(b.bound, &b), 1.0);
        assert_eq!(map_to_device(-b.bound, &b), 0.0);
        assert_eq!(map_to_device(10.0, &b), 1.0);
        assert_eq!(map_from_device(0.5, &b), 0.0);
    }

    #[test]
    fn conv1_example() {
        let b = LayerBound::from_fan_in(9);
        assert!((b.bound - 0.3330).abs() < 5e-4);
        assert!((map_to_device(0.1665, &b) - 0.75).abs() < 1e-3);
        assert!((map_to_device(b.bound / 2.0, &b) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conv2_example() {
        let b = LayerBound::from_fan_in(576);
        assert!((map_from_device(1.0, &b) - 0.0417).abs() < 5e-5);
    }

    proptest! {
        #[test]
        fn roundtrip(u in -1.0f64..=1.0, fan_in in 1usize..5000) {
            let b = LayerBound::from_fan_in(fan_in);
            let w = u * b.bound;
            let back = map_from_device(map_to_device(w, &b), &b);
            prop_assert!((back - w).abs() <= 1e-12 * b.bound);
            prop_assert!((0.0..=1.0).contains(&map_to_device(w, &b)));
        }
    }
}
