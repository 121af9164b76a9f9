use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weight_fabric::LayerBound;

/// The seven synaptic layers, in feed-forward order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Conv1,
    Conv2,
    Conv3,
    Tc1,
    R1,
    Fc1,
    Fc2,
}

impl Layer {
    pub const ALL: [Layer; 7] = [
        Layer::Conv1,
        Layer::Conv2,
        Layer::Conv3,
        Layer::Tc1,
        Layer::R1,
        Layer::Fc1,
        Layer::Fc2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Conv1 => "conv1",
            Layer::Conv2 => "conv2",
            Layer::Conv3 => "conv3",
            Layer::Tc1 => "tc1",
            Layer::R1 => "r1",
            Layer::Fc1 => "fc1",
            Layer::Fc2 => "fc2",
        }
    }

    pub fn from_name(name: &str) -> Result<Layer> {
        Layer::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown layer {name:?}")))
    }
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of a valid (unpadded) square-kernel convolution on HWC tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
}

impl ConvGeom {
    fn new(in_h: usize, in_w: usize, in_c: usize, k: usize, out_c: usize) -> Option<Self> {
        (k >= 1 && in_h >= k && in_w >= k).then(|| Self {
            in_h,
            in_w,
            in_c,
            k,
            out_h: in_h - k + 1,
            out_w: in_w - k + 1,
            out_c,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w * self.out_c
    }

    pub fn weight_len(&self) -> usize {
        self.k * self.k * self.in_c * self.out_c
    }
}

/// Layer topology of the convolutional-recurrent network.
///
/// The recurrent layer has the same width as the temporal-convolution layer
/// and receives its spikes one-to-one in addition to its own recurrent drive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_rows: usize,
    pub input_cols: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool: usize,
    pub conv3_filters: usize,
    pub conv3_kernel: usize,
    pub temporal_units: usize,
    pub temporal_taps: usize,
    pub hidden_units: usize,
    pub classes: usize,
    pub timesteps: usize,
}

impl NetworkSpec {
    /// Full-size architecture on the 10×11 electrode grid.
    pub fn reference(timesteps: usize) -> Self {
        Self {
            input_rows: 10,
            input_cols: 11,
            conv1_filters: 64,
            conv1_kernel: 3,
            conv2_filters: 128,
            conv2_kernel: 3,
            pool: 2,
            conv3_filters: 256,
            conv3_kernel: 3,
            temporal_units: 256,
            temporal_taps: 3,
            hidden_units: 256,
            classes: 2,
            timesteps,
        }
    }

    /// Divides every hidden width by `divisor` (rounding up, at least 1).
    pub fn scaled(&self, divisor: usize) -> Self {
        let d = |n: usize| n.div_ceil(divisor.max(1)).max(1);
        Self {
            conv1_filters: d(self.conv1_filters),
            conv2_filters: d(self.conv2_filters),
            conv3_filters: d(self.conv3_filters),
            temporal_units: d(self.temporal_units),
            hidden_units: d(self.hidden_units),
            ..self.clone()
        }
    }

    /// Smallest network with every layer type present: a 2×2 grid, one
    /// CONV1 filter, 1×1 kernels and two units elsewhere.
    pub fn miniature() -> Self {
        Self {
            input_rows: 2,
            input_cols: 2,
            conv1_filters: 1,
            conv1_kernel: 1,
            conv2_filters: 2,
            conv2_kernel: 1,
            pool: 2,
            conv3_filters: 2,
            conv3_kernel: 1,
            temporal_units: 2,
            temporal_taps: 3,
            hidden_units: 2,
            classes: 2,
            timesteps: 3,
        }
    }

    pub fn conv1(&self) -> ConvGeom {
        ConvGeom::new(self.input_rows, self.input_cols, 1, self.conv1_kernel, self.conv1_filters)
            .expect("validated spec")
    }

    pub fn conv2(&self) -> ConvGeom {
        let c1 = self.conv1();
        ConvGeom::new(c1.out_h, c1.out_w, c1.out_c, self.conv2_kernel, self.conv2_filters)
            .expect("validated spec")
    }

    /// (height, width, channels) after average pooling.
    pub fn pooled(&self) -> (usize, usize, usize) {
        let c2 = self.conv2();
        (c2.out_h / self.pool, c2.out_w / self.pool, c2.out_c)
    }

    pub fn conv3(&self) -> ConvGeom {
        let (h, w, c) = self.pooled();
        ConvGeom::new(h, w, c, self.conv3_kernel, self.conv3_filters).expect("validated spec")
    }

    pub fn pooled_len(&self) -> usize {
        let (h, w, c) = self.pooled();
        h * w * c
    }

    /// Flattened CONV3 feature count feeding the temporal convolution.
    pub fn features(&self) -> usize {
        self.conv3().out_len()
    }

    pub fn input_len(&self) -> usize {
        self.input_rows * self.input_cols
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_rows,
            self.input_cols,
            self.conv1_filters,
            self.conv2_filters,
            self.conv3_filters,
            self.temporal_units,
            self.temporal_taps,
            self.hidden_units,
            self.classes,
            self.timesteps,
            self.pool,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(format!("network dimensions must be positive: {self:?}")));
        }
        let c1 = ConvGeom::new(self.input_rows, self.input_cols, 1, self.conv1_kernel, self.conv1_filters)
            .ok_or_else(|| Error::Config("CONV1 kernel larger than input".into()))?;
        let c2 = ConvGeom::new(c1.out_h, c1.out_w, c1.out_c, self.conv2_kernel, self.conv2_filters)
            .ok_or_else(|| Error::Config("CONV2 kernel larger than its input".into()))?;
        let (ph, pw) = (c2.out_h / self.pool, c2.out_w / self.pool);
        ConvGeom::new(ph, pw, c2.out_c, self.conv3_kernel, self.conv3_filters)
            .ok_or_else(|| Error::Config("CONV3 kernel larger than pooled map".into()))?;
        if self.timesteps < self.temporal_taps {
            return Err(Error::Config(format!(
                "need at least {} timesteps, got {}",
                self.temporal_taps, self.timesteps
            )));
        }
        Ok(())
    }

    /// Weight tensor shape in storage order. Convolutions are
    /// `[k, k, in, out]`, the temporal convolution `[taps, in, out]` and dense
    /// layers `[in, out]`.
    pub fn weight_shape(&self, layer: Layer) -> Vec<usize> {
        let conv = |g: ConvGeom| vec![g.k, g.k, g.in_c, g.out_c];
        match layer {
            Layer::Conv1 => conv(self.conv1()),
            Layer::Conv2 => conv(self.conv2()),
            Layer::Conv3 => conv(self.conv3()),
            Layer::Tc1 => vec![self.temporal_taps, self.features(), self.temporal_units],
            Layer::R1 => vec![self.temporal_units, self.temporal_units],
            Layer::Fc1 => vec![self.temporal_units, self.hidden_units],
            Layer::Fc2 => vec![self.hidden_units, self.classes],
        }
    }

    pub fn weight_len(&self, layer: Layer) -> usize {
        self.weight_shape(layer).iter().product()
    }

    /// Fan-in used for the weight bound. The temporal convolution counts its
    /// input features once, not once per tap.
    pub fn fan_in(&self, layer: Layer) -> usize {
        let conv = |g: ConvGeom| g.k * g.k * g.in_c;
        match layer {
            Layer::Conv1 => conv(self.conv1()),
            Layer::Conv2 => conv(self.conv2()),
            Layer::Conv3 => conv(self.conv3()),
            Layer::Tc1 => self.features(),
            Layer::R1 | Layer::Fc1 => self.temporal_units,
            Layer::Fc2 => self.hidden_units,
        }
    }

    pub fn bound(&self, layer: Layer) -> LayerBound {
        LayerBound::from_fan_in(self.fan_in(layer))
    }

    /// Number of neurons driven by this layer's synapses.
    pub fn neurons(&self, layer: Layer) -> usize {
        match layer {
            Layer::Conv1 => self.conv1().out_len(),
            Layer::Conv2 => self.conv2().out_len(),
            Layer::Conv3 => self.features(),
            Layer::Tc1 | Layer::R1 => self.temporal_units,
            Layer::Fc1 => self.hidden_units,
            Layer::Fc2 => self.classes,
        }
    }

    pub fn synaptic_total(&self) -> usize {
        Layer::ALL.iter().map(|&l| self.weight_len(l)).sum()
    }

    pub fn neuron_total(&self) -> usize {
        Layer::ALL.iter().map(|&l| self.neurons(l)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_census() {
        let s = NetworkSpec::reference(160);
        s.validate().unwrap();
        let counts: Vec<usize> = Layer::ALL.iter().map(|&l| s.weight_len(l)).collect();
        assert_eq!(counts, vec![576, 73_728, 294_912, 196_608, 65_536, 65_536, 512]);
        assert_eq!(s.synaptic_total(), 697_408);
        let neurons: Vec<usize> = Layer::ALL.iter().map(|&l| s.neurons(l)).collect();
        assert_eq!(neurons, vec![4608, 5376, 256, 256, 256, 256, 2]);
        assert_eq!(s.neuron_total(), 11_010);
        assert_eq!((s.conv1().out_h, s.conv1().out_w), (8, 9));
        assert_eq!((s.conv2().out_h, s.conv2().out_w), (6, 7));
        assert_eq!(s.pooled(), (3, 3, 128));
        assert_eq!(s.features(), 256);
    }

    #[test]
    fn reference_bounds() {
        let s = NetworkSpec::reference(160);
        let table = [0.3330, 0.0417, 0.0295, 0.0625, 0.0625, 0.0625, 0.0625];
        for (l, want) in Layer::ALL.iter().zip(table) {
            let b = s.bound(*l).bound;
            assert!((b - want).abs() < 5e-4, "{l}: {b} vs {want}");
        }
    }

    #[test]
    fn miniature_and_scaled_are_valid() {
        NetworkSpec::miniature().validate().unwrap();
        let s = NetworkSpec::reference(40).scaled(8);
        s.validate().unwrap();
        assert_eq!(s.conv1_filters, 8);
        assert_eq!(s.features(), 32);
    }

    #[test]
    fn invalid_specs() {
        let mut s = NetworkSpec::miniature();
        s.timesteps = 2;
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::miniature();
        s.conv1_kernel = 3;
        assert!(s.validate().is_err());
        assert!(Layer::from_name("FC1").is_ok());
        assert!(Layer::from_name("fc9").is_err());
    }
}
