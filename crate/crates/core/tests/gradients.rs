mod common;

use common::{grad_check, random_input, relaxed_network};
use ferrosyn::snn::{Layer, NetworkSpec};

#[test]
fn miniature_matches_finite_differences() {
    let spec = NetworkSpec::miniature();
    let mut nonzero = 0;
    let mut checked = 0;
    for seed in 0..8 {
        let mut net = relaxed_network(spec.clone(), seed);
        let x = random_input(&spec, seed);
        let r = grad_check(&mut net, &x, (seed % 2) as usize, 1e-4, 1e-2);
        println!("seed {seed}: {r:?}");
        nonzero += r.nonzero;
        checked += r.checked;
        assert!(r.tight_fraction() >= 0.95, "{r:?}");
        assert!(r.all_within_loose(), "{r:?}");
    }
    // guard against a vacuous pass where nothing reaches the window
    assert!(nonzero * 5 >= checked * 2, "{nonzero}/{checked}");
}

#[test]
fn wider_network_matches_finite_differences() {
    let spec = NetworkSpec {
        input_rows: 6,
        input_cols: 7,
        conv1_filters: 2,
        conv1_kernel: 2,
        conv2_filters: 3,
        conv2_kernel: 2,
        pool: 2,
        conv3_filters: 3,
        conv3_kernel: 2,
        temporal_units: 3,
        temporal_taps: 3,
        hidden_units: 3,
        classes: 2,
        timesteps: 6,
    };
    let mut net = relaxed_network(spec.clone(), 11);
    let x = random_input(&spec, 12);
    let r = grad_check(&mut net, &x, 1, 1e-4, 1e-2);
    println!("{r:?}");
    assert!(r.tight_fraction() >= 0.95, "{r:?}");
}

#[test]
fn truncated_history_changes_gradients() {
    // dropping the last timestep must change early-layer gradients
    let spec = NetworkSpec { timesteps: 5, ..NetworkSpec::miniature() };
    let short = NetworkSpec { timesteps: 4, ..spec.clone() };
    let net = relaxed_network(spec.clone(), 0);
    let mut net_short = relaxed_network(short.clone(), 0);
    net_short.params.weights = net.params.weights.clone();
    let x = random_input(&spec, 0);
    let xs = &x[..short.timesteps * short.input_len()];
    let (_, g) = net.backward(&net.forward(&x).unwrap(), 0, Layer::Conv1).unwrap();
    let (_, gs) = net_short.backward(&net_short.forward(xs).unwrap(), 0, Layer::Conv1).unwrap();
    for l in [Layer::Conv1, Layer::Conv3, Layer::Tc1] {
        assert!(g.weights(l).iter().any(|&v| v != 0.0), "{l}");
        assert_ne!(g.weights(l), gs.weights(l), "{l}");
    }
}

#[test]
fn gradient_grows_with_surrogate_amplitude() {
    let spec = NetworkSpec::reference(6).scaled(16);
    let mut prev = 0.0;
    for amp in [0.25, 0.5, 1.0, 2.0] {
        let mut net = relaxed_network(spec.clone(), 5);
        net.neuron.spike_fn = ferrosyn::snn::SpikeFn::Heaviside;
        net.neuron.surrogate.window = 1e6;
        net.neuron.surrogate.amplitude = amp;
        let x = random_input(&spec, 6);
        let (_, g) = net.backward(&net.forward(&x).unwrap(), 1, Layer::Conv1).unwrap();
        let n: f64 = g.weights(Layer::Conv1).iter().map(|v| v * v).sum();
        assert!(n > prev, "amplitude {amp}: {n} <= {prev}");
        prev = n;
    }
}
