//! Spiking network: layer topology, LIF dynamics, forward and BPTT.

mod lif;
mod network;
mod params;
mod spec;
mod spike_dump;

pub use lif::{lif_step, surrogate_grad, LifParams, LifState, SpikeFn, SurrogateParams};
pub use network::{
    argmax, softmax_cross_entropy, temporal_aggregate, BatchGradient, ForwardRecord, Network, Trace,
    TrialGradient,
};
pub use params::{Gradients, NetworkParams, NeuronConfig};
pub use spec::{ConvGeom, Layer, NetworkSpec};
pub use spike_dump::{read_dumps, write_dumps, SpikeDump};
