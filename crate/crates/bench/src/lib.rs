//! Fixtures shared by the criterion benches.

use ferrosyn::data::{synth_dataset, SynthSpec, Trial};
use ferrosyn::snn::{Network, NetworkSpec, NeuronConfig};

/// Reference architecture scaled by `divisor`, over `timesteps` steps.
pub fn network(divisor: usize, timesteps: usize) -> Network {
    Network::init(NetworkSpec::reference(timesteps).scaled(divisor), NeuronConfig::default(), 0).expect("valid spec")
}

pub fn trials(n: usize, timesteps: usize) -> Vec<Trial> {
    synth_dataset(&SynthSpec { timesteps, snr: 3.0, ..SynthSpec::default() }, n, 0)
}
