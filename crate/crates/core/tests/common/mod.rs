#![allow(dead_code)]

use ferrosyn::rng;
use ferrosyn::snn::{softmax_cross_entropy, Layer, Network, NetworkSpec, NeuronConfig, SpikeFn};
use rand::Rng;

/// Outcome of a finite-difference comparison over every trainable scalar.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub tight: usize,
    pub loose: usize,
    /// Checked parameters with a non-negligible gradient.
    pub nonzero: usize,
    pub degenerate: Vec<String>,
    pub worst: Vec<(String, f64, f64)>,
}

impl GradCheck {
    pub fn tight_fraction(&self) -> f64 {
        self.tight as f64 / self.checked.max(1) as f64
    }

    pub fn all_within_loose(&self) -> bool {
        self.tight + self.loose == self.checked
    }
}

/// Network with the clipped-linear spike so finite differences see the same
/// derivative the backward pass uses, and weights large enough to keep many
/// membranes inside the surrogate window.
pub fn relaxed_network(spec: NetworkSpec, seed: u64) -> Network {
    let mut neuron = NeuronConfig { spike_fn: SpikeFn::Relaxed, ..NeuronConfig::default() };
    neuron.surrogate.window = 0.6;
    let mut net = Network::init(spec, neuron, seed).unwrap();
    let mut r = rng::stream(seed, &[1]);
    for w in net.params.weights.iter_mut().flatten() {
        *w = r.gen_range(-1.2..1.2);
    }
    for d in net.params.beta.iter_mut().chain(net.params.gamma.iter_mut()) {
        *d = r.gen_range(0.3..0.9);
    }
    for w in &mut net.params.w_ts {
        *w = r.gen_range(0.2..1.0);
    }
    net
}

pub fn random_input(spec: &NetworkSpec, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[2]);
    (0..spec.timesteps * spec.input_len()).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn loss(net: &Network, x: &[f64], target: usize) -> f64 {
    softmax_cross_entropy(&net.forward(x).unwrap().y, target).0
}

fn central(net: &mut Network, x: &[f64], target: usize, h: f64, get: &dyn Fn(&mut Network) -> &mut f64) -> f64 {
    let orig = *get(net);
    *get(net) = orig + h;
    let up = loss(net, x, target);
    *get(net) = orig - h;
    let down = loss(net, x, target);
    *get(net) = orig;
    (up - down) / (2.0 * h)
}

/// Compares BPTT gradients with central differences for every parameter.
/// A parameter whose difference quotient changes between two step sizes is
/// straddling a kink of the clipped spike and is reported as degenerate.
pub fn grad_check(net: &mut Network, x: &[f64], target: usize, tight: f64, loose: f64) -> GradCheck {
    let rec = net.forward(x).unwrap();
    let (_, g) = net.backward(&rec, target, Layer::Conv1).unwrap();
    let mut out = GradCheck::default();
    let mut entries: Vec<(String, f64, Box<dyn Fn(&mut Network) -> &mut f64>)> = Vec::new();
    for l in Layer::ALL {
        for k in 0..g.weights(l).len() {
            entries.push((format!("{l}.w[{k}]"), g.weights(l)[k], Box::new(move |n: &mut Network| &mut n.params.weights[l.index()][k])));
        }
        let li = l.index();
        entries.push((format!("{l}.beta"), g.beta[li], Box::new(move |n: &mut Network| &mut n.params.beta[li])));
        entries.push((format!("{l}.gamma"), g.gamma[li], Box::new(move |n: &mut Network| &mut n.params.gamma[li])));
    }
    for t in 0..g.w_ts.len() {
        entries.push((format!("w_ts[{t}]"), g.w_ts[t], Box::new(move |n: &mut Network| &mut n.params.w_ts[t])));
    }
    for (name, analytic, get) in entries {
        let fd = central(net, x, target, 1e-6, &*get);
        let fd_small = central(net, x, target, 1e-7, &*get);
        let scale = analytic.abs().max(fd.abs());
        if (fd - fd_small).abs() > 1e-5 * scale.max(1e-8) + 1e-9 {
            out.degenerate.push(name);
            continue;
        }
        out.checked += 1;
        out.nonzero += usize::from(scale >= 1e-10);
        let err = if scale < 1e-10 { 0.0 } else { (analytic - fd).abs() / scale };
        if err < tight {
            out.tight += 1;
        } else if err < loose {
            out.loose += 1;
        }
        if err >= tight {
            out.worst.push((name, analytic, fd));
        }
    }
    out
}
