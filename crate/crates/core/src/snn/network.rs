//! Forward dynamics and backpropagation through time.
//!
//! Activations are stored channel-last (HWC) per timestep so that the
//! innermost loops of every convolution and dense product run over
//! contiguous output channels. Spike trains are sparse, so forward products
//! scatter from non-zero inputs only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lif::{step_into, surrogate_grad, LifParams, SurrogateParams};
use super::params::{Gradients, NetworkParams, NeuronConfig};
use super::spec::{ConvGeom, Layer, NetworkSpec};
use crate::error::{Error, Result};

/// Per-layer state history, `T × n` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub i: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
}

impl Trace {
    fn zeros(n: usize, t: usize) -> Self {
        Self {
            n,
            i: vec![0.0; n * t],
            v: vec![0.0; n * t],
            s: vec![0.0; n * t],
        }
    }

    pub fn spikes_at(&self, t: usize) -> &[f64] {
        &self.s[t * self.n..(t + 1) * self.n]
    }

    /// Mean spike value over neurons and timesteps.
    pub fn rate(&self) -> f64 {
        if self.s.is_empty() {
            0.0
        } else {
            self.s.iter().sum::<f64>() / self.s.len() as f64
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    pub input: Vec<f64>,
    pub traces: Vec<Trace>,
    pub pooled: Vec<f64>,
    /// Class scores after temporal weighting.
    pub y: Vec<f64>,
}

impl ForwardRecord {
    pub fn trace(&self, layer: Layer) -> &Trace {
        &self.traces[layer.index()]
    }

    /// Per-timestep output logits `o(t)`, `T × classes`.
    pub fn logits(&self) -> &[f64] {
        &self.trace(Layer::Fc2).v
    }

    pub fn prediction(&self) -> usize {
        argmax(&self.y)
    }
}

/// Index of the largest score; ties resolve to the lowest index.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in y.iter().enumerate().skip(1) {
        if v > y[best] {
            best = k;
        }
    }
    best
}

/// `y = Σ_t w_ts(t)·o(t)` for logits laid out `T × classes`.
pub fn temporal_aggregate(logits: &[f64], w_ts: &[f64]) -> Result<Vec<f64>> {
    if w_ts.is_empty() || logits.len() % w_ts.len() != 0 {
        return Err(Error::shape("temporal weights", logits.len() / w_ts.len().max(1), w_ts.len()));
    }
    let classes = logits.len() / w_ts.len();
    let mut y = vec![0.0; classes];
    for (o, &w) in logits.chunks_exact(classes).zip(w_ts) {
        for (acc, &v) in y.iter_mut().zip(o) {
            *acc += w * v;
        }
    }
    Ok(y)
}

/// Softmax cross-entropy and its gradient with respect to the scores.
pub fn softmax_cross_entropy(y: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = -(exps[target] / z).ln();
    let grad = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / z - if k == target { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub neuron: NeuronConfig,
    pub params: NetworkParams,
}

/// Result of one trial's forward/backward.
#[derive(Clone, Debug)]
pub struct TrialGradient {
    pub loss: f64,
    pub prediction: usize,
    pub grads: Gradients,
}

/// Mean loss and summed gradients over a batch, reduced in trial order.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub loss: f64,
    pub correct: usize,
    pub grads: Gradients,
}

fn dense_forward(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n_out = out.len();
    for (ix, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &w[ix * n_out..(ix + 1) * n_out];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
}

fn dense_weight_grad(dw: &mut [f64], x: &[f64], d_out: &[f64]) {
    let n_out = d_out.len();
    for (ix, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &mut dw[ix * n_out..(ix + 1) * n_out];
        for (g, &d) in row.iter_mut().zip(d_out) {
            *g += xv * d;
        }
    }
}

fn dense_input_grad(w: &[f64], d_out: &[f64], d_in: &mut [f64]) {
    let n_out = d_out.len();
    for (ix, g) in d_in.iter_mut().enumerate() {
        let row = &w[ix * n_out..(ix + 1) * n_out];
        *g += row.iter().zip(d_out).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn conv_forward(g: &ConvGeom, w: &[f64], x: &[f64], out: &mut [f64]) {
    let (k, ci_n, co_n) = (g.k, g.in_c, g.out_c);
    for iy in 0..g.in_h {
        for ix in 0..g.in_w {
            for ci in 0..ci_n {
                let xv = x[(iy * g.in_w + ix) * ci_n + ci];
                if xv == 0.0 {
                    continue;
                }
                for dy in 0..k {
                    let Some(oy) = iy.checked_sub(dy).filter(|&oy| oy < g.out_h) else {
                        continue;
                    };
                    for dx in 0..k {
                        let Some(ox) = ix.checked_sub(dx).filter(|&ox| ox < g.out_w) else {
                            continue;
                        };
                        let wr = &w[((dy * k + dx) * ci_n + ci) * co_n..][..co_n];
                        let orow = &mut out[(oy * g.out_w + ox) * co_n..][..co_n];
                        for (o, &wv) in orow.iter_mut().zip(wr) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
}

fn conv_weight_grad(g: &ConvGeom, x: &[f64], d_out: &[f64], dw: &mut [f64]) {
    let (k, ci_n, co_n) = (g.k, g.in_c, g.out_c);
    for iy in 0..g.in_h {
        for ix in 0..g.in_w {
            for ci in 0..ci_n {
                let xv = x[(iy * g.in_w + ix) * ci_n + ci];
                if xv == 0.0 {
                    continue;
                }
                for dy in 0..k {
                    let Some(oy) = iy.checked_sub(dy).filter(|&oy| oy < g.out_h) else {
                        continue;
                    };
                    for dx in 0..k {
                        let Some(ox) = ix.checked_sub(dx).filter(|&ox| ox < g.out_w) else {
                            continue;
                        };
                        let grow = &mut dw[((dy * k + dx) * ci_n + ci) * co_n..][..co_n];
                        let drow = &d_out[(oy * g.out_w + ox) * co_n..][..co_n];
                        for (gw, &d) in grow.iter_mut().zip(drow) {
                            *gw += xv * d;
                        }
                    }
                }
            }
        }
    }
}

fn conv_input_grad(g: &ConvGeom, w: &[f64], d_out: &[f64], d_in: &mut [f64]) {
    let (k, ci_n, co_n) = (g.k, g.in_c, g.out_c);
    for iy in 0..g.in_h {
        for ix in 0..g.in_w {
            for ci in 0..ci_n {
                let mut acc = 0.0;
                for dy in 0..k {
                    let Some(oy) = iy.checked_sub(dy).filter(|&oy| oy < g.out_h) else {
                        continue;
                    };
                    for dx in 0..k {
                        let Some(ox) = ix.checked_sub(dx).filter(|&ox| ox < g.out_w) else {
                            continue;
                        };
                        let wr = &w[((dy * k + dx) * ci_n + ci) * co_n..][..co_n];
                        let drow = &d_out[(oy * g.out_w + ox) * co_n..][..co_n];
                        acc += wr.iter().zip(drow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                d_in[(iy * g.in_w + ix) * ci_n + ci] += acc;
            }
        }
    }
}

fn avg_pool(g: &ConvGeom, p: usize, x: &[f64], out: &mut [f64]) {
    let (ph, pw, c) = (g.out_h / p, g.out_w / p, g.out_c);
    let norm = 1.0 / (p * p) as f64;
    for y in 0..ph {
        for x0 in 0..pw {
            let orow = &mut out[(y * pw + x0) * c..][..c];
            orow.iter_mut().for_each(|o| *o = 0.0);
            for a in 0..p {
                for b in 0..p {
                    let irow = &x[((y * p + a) * g.out_w + x0 * p + b) * c..][..c];
                    for (o, &v) in orow.iter_mut().zip(irow) {
                        *o += v;
                    }
                }
            }
            orow.iter_mut().for_each(|o| *o *= norm);
        }
    }
}

fn avg_pool_backward(g: &ConvGeom, p: usize, d_out: &[f64], d_in: &mut [f64]) {
    let (ph, pw, c) = (g.out_h / p, g.out_w / p, g.out_c);
    let norm = 1.0 / (p * p) as f64;
    for y in 0..ph {
        for x0 in 0..pw {
            let drow = &d_out[(y * pw + x0) * c..][..c];
            for a in 0..p {
                for b in 0..p {
                    let irow = &mut d_in[((y * p + a) * g.out_w + x0 * p + b) * c..][..c];
                    for (gi, &d) in irow.iter_mut().zip(drow) {
                        *gi += d * norm;
                    }
                }
            }
        }
    }
}

/// Splits a `T × n` buffer into the previous and current timestep rows.
fn prev_cur(buf: &mut [f64], t: usize, n: usize) -> (&[f64], &mut [f64]) {
    let (head, tail) = buf.split_at_mut(t * n);
    let prev: &[f64] = if t == 0 { &[] } else { &head[(t - 1) * n..] };
    (prev, &mut tail[..n])
}

/// Adjoint of one LIF (or non-spiking readout) population through all
/// timesteps. `ext` enters holding `∂L/∂s_t` (or `∂L/∂v_t` for the readout)
/// from downstream and leaves holding `∂L/∂I_t`. `hook(t, dI_{t+1}, ext_t)`
/// lets the caller add recurrent contributions before step `t` is processed.
/// Returns `(∂L/∂β, ∂L/∂γ)`.
#[allow(clippy::too_many_arguments)]
fn lif_backward(
    tr: &Trace,
    t_len: usize,
    p: &LifParams,
    sp: &SurrogateParams,
    readout: bool,
    ext: &mut [f64],
    mut hook: impl FnMut(usize, &[f64], &mut [f64]),
) -> (f64, f64) {
    let n = tr.n;
    let zeros = vec![0.0; n];
    let mut dv_next = vec![0.0; n];
    let (mut d_beta, mut d_gamma) = (0.0, 0.0);
    for t in (0..t_len).rev() {
        let (head, tail) = ext.split_at_mut((t + 1) * n);
        let ext_t = &mut head[t * n..];
        let di_next: &[f64] = if t + 1 < t_len { &tail[..n] } else { &zeros };
        hook(t, di_next, ext_t);
        for j in 0..n {
            let idx = t * n + j;
            let v = tr.v[idx];
            let dv = if readout {
                ext_t[j] + p.gamma * dv_next[j]
            } else {
                let s = tr.s[idx];
                // v_{t+1} depends on s_t through the reset gate
                let ds = ext_t[j] - dv_next[j] * p.gamma * v;
                surrogate_grad(v, sp, p.v_th) * ds + dv_next[j] * p.gamma * (1.0 - s)
            };
            let di = dv + p.beta * di_next[j];
            if t > 0 {
                let prev = idx - n;
                let carry = if readout {
                    tr.v[prev]
                } else {
                    tr.v[prev] * (1.0 - tr.s[prev])
                };
                d_gamma += dv * carry;
                d_beta += di * tr.i[prev];
            }
            ext_t[j] = di;
            dv_next[j] = dv;
        }
    }
    (d_beta, d_gamma)
}

impl Network {
    pub fn new(spec: NetworkSpec, neuron: NeuronConfig, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        Ok(Self { spec, neuron, params })
    }

    pub fn init(spec: NetworkSpec, neuron: NeuronConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::rng::stream(seed, &[crate::rng::tag("init")]);
        let params = NetworkParams::init(&spec, &neuron, &mut rng);
        Self::new(spec, neuron, params)
    }

    fn lif(&self, layer: Layer) -> LifParams {
        LifParams {
            beta: self.params.beta[layer.index()],
            gamma: self.params.gamma[layer.index()],
            v_th: self.neuron.v_th,
        }
    }

    pub fn forward<X: Copy + Into<f64>>(&self, input: &[X]) -> Result<ForwardRecord> {
        let spec = &self.spec;
        let t_len = spec.timesteps;
        let n_in = spec.input_len();
        if input.len() != t_len * n_in {
            return Err(Error::shape("trial input", t_len * n_in, input.len()));
        }
        let x: Vec<f64> = input.iter().map(|&v| v.into()).collect();
        let (g1, g2, g3) = (spec.conv1(), spec.conv2(), spec.conv3());
        let n_pool = spec.pooled_len();
        let nf = spec.features();
        let taps = spec.temporal_taps;
        let mut traces: Vec<Trace> = Layer::ALL
            .iter()
            .map(|&l| Trace::zeros(spec.neurons(l), t_len))
            .collect();
        let mut pooled = vec![0.0; t_len * n_pool];
        let w = |l: Layer| self.params.weights(l);
        let f = self.neuron.spike_fn;
        let sp = self.neuron.surrogate;
        let max_n = traces.iter().map(|t| t.n).max().unwrap_or(0);
        let mut cur = vec![0.0; max_n];

        let step = |tr: &mut Trace, t: usize, input: &[f64], p: &LifParams, readout: bool| {
            let n = tr.n;
            let (ip, ic) = prev_cur(&mut tr.i, t, n);
            let (vp, vc) = prev_cur(&mut tr.v, t, n);
            let (sp_prev, sc) = prev_cur(&mut tr.s, t, n);
            let zeros;
            let (ip, vp, sp_prev) = if t == 0 {
                zeros = vec![0.0; n];
                (&zeros[..], &zeros[..], &zeros[..])
            } else {
                (ip, vp, sp_prev)
            };
            if readout {
                for j in 0..n {
                    ic[j] = p.beta * ip[j] + input[j];
                    vc[j] = p.gamma * vp[j] + ic[j];
                }
            } else {
                step_into(ip, vp, sp_prev, input, p, f, &sp, ic, vc, sc);
            }
        };

        for t in 0..t_len {
            // CONV1 on the analog electrode frame
            let c = &mut cur[..g1.out_len()];
            c.fill(0.0);
            conv_forward(&g1, w(Layer::Conv1), &x[t * n_in..(t + 1) * n_in], c);
            step(&mut traces[0], t, c, &self.lif(Layer::Conv1), false);

            let c = &mut cur[..g2.out_len()];
            c.fill(0.0);
            conv_forward(&g2, w(Layer::Conv2), traces[0].spikes_at(t), c);
            step(&mut traces[1], t, c, &self.lif(Layer::Conv2), false);

            let pt = &mut pooled[t * n_pool..(t + 1) * n_pool];
            avg_pool(&g2, spec.pool, traces[1].spikes_at(t), pt);

            let c = &mut cur[..nf];
            c.fill(0.0);
            conv_forward(&g3, w(Layer::Conv3), &pooled[t * n_pool..(t + 1) * n_pool], c);
            step(&mut traces[2], t, c, &self.lif(Layer::Conv3), false);

            // temporal convolution over the last `taps` CONV3 outputs
            let nt = spec.temporal_units;
            let c = &mut cur[..nt];
            c.fill(0.0);
            for tap in 0..taps {
                let Some(src) = (t + tap + 1).checked_sub(taps) else {
                    continue;
                };
                let wt = &w(Layer::Tc1)[tap * nf * nt..(tap + 1) * nf * nt];
                dense_forward(wt, traces[2].spikes_at(src), c);
            }
            step(&mut traces[3], t, c, &self.lif(Layer::Tc1), false);

            let c = &mut cur[..nt];
            c.copy_from_slice(traces[3].spikes_at(t));
            if t > 0 {
                let (prev, _) = traces[4].s.split_at(t * nt);
                dense_forward(w(Layer::R1), &prev[(t - 1) * nt..], c);
            }
            step(&mut traces[4], t, c, &self.lif(Layer::R1), false);

            let c = &mut cur[..spec.hidden_units];
            c.fill(0.0);
            dense_forward(w(Layer::Fc1), traces[4].spikes_at(t), c);
            step(&mut traces[5], t, c, &self.lif(Layer::Fc1), false);

            let c = &mut cur[..spec.classes];
            c.fill(0.0);
            dense_forward(w(Layer::Fc2), traces[5].spikes_at(t), c);
            step(&mut traces[6], t, c, &self.lif(Layer::Fc2), true);
        }
        let y = temporal_aggregate(&traces[6].v, &self.params.w_ts)?;
        Ok(ForwardRecord {
            input: x,
            traces,
            pooled,
            y,
        })
    }

    /// Cross-entropy loss and exact BPTT gradients for one recorded trial.
    ///
    /// Layers below `lowest` are skipped and keep zero gradient, including
    /// their decays. Temporal weights always receive gradient.
    pub fn backward(&self, rec: &ForwardRecord, target: usize, lowest: Layer) -> Result<(f64, Gradients)> {
        let spec = &self.spec;
        if target >= spec.classes {
            return Err(Error::Config(format!("target class {target} out of range")));
        }
        let t_len = spec.timesteps;
        let nc = spec.classes;
        let sp = self.neuron.surrogate;
        let mut grads = Gradients::zeros(spec);
        let (loss, dy) = softmax_cross_entropy(&rec.y, target);

        // temporal weighting
        let logits = rec.logits();
        let mut ext = vec![0.0; t_len * nc];
        for t in 0..t_len {
            let o = &logits[t * nc..(t + 1) * nc];
            grads.w_ts[t] = o.iter().zip(&dy).map(|(a, b)| a * b).sum();
            for c in 0..nc {
                ext[t * nc + c] = self.params.w_ts[t] * dy[c];
            }
        }

        let record_decays = |grads: &mut Gradients, l: Layer, (db, dg): (f64, f64)| {
            grads.beta[l.index()] = db;
            grads.gamma[l.index()] = dg;
        };

        // FC2 readout
        let tr = rec.trace(Layer::Fc2);
        let d = lif_backward(tr, t_len, &self.lif(Layer::Fc2), &sp, true, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Fc2, d);
        let below = rec.trace(Layer::Fc1);
        for t in 0..t_len {
            dense_weight_grad(&mut grads.weights[Layer::Fc2.index()], below.spikes_at(t), &ext[t * nc..(t + 1) * nc]);
        }
        if lowest >= Layer::Fc2 {
            return Ok((loss, grads));
        }
        let ext = self.dense_to_below(Layer::Fc2, &ext, below.n);

        // FC1
        let mut ext = ext;
        let tr = rec.trace(Layer::Fc1);
        let d = lif_backward(tr, t_len, &self.lif(Layer::Fc1), &sp, false, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Fc1, d);
        let below = rec.trace(Layer::R1);
        let nh = tr.n;
        for t in 0..t_len {
            dense_weight_grad(&mut grads.weights[Layer::Fc1.index()], below.spikes_at(t), &ext[t * nh..(t + 1) * nh]);
        }
        if lowest >= Layer::Fc1 {
            return Ok((loss, grads));
        }
        let mut ext = self.dense_to_below(Layer::Fc1, &ext, below.n);

        // R1: recurrent drive from its own previous spikes
        let tr = rec.trace(Layer::R1);
        let nr = tr.n;
        let w_rec = self.params.weights(Layer::R1);
        let d = lif_backward(tr, t_len, &self.lif(Layer::R1), &sp, false, &mut ext, |t, di_next, ext_t| {
            if t + 1 < t_len {
                dense_input_grad(w_rec, di_next, ext_t);
            }
        });
        record_decays(&mut grads, Layer::R1, d);
        for t in 1..t_len {
            dense_weight_grad(&mut grads.weights[Layer::R1.index()], tr.spikes_at(t - 1), &ext[t * nr..(t + 1) * nr]);
        }
        if lowest >= Layer::R1 {
            return Ok((loss, grads));
        }
        // one-to-one feed-forward from TC1
        let mut ext = ext;

        // TC1
        let tr = rec.trace(Layer::Tc1);
        let nt = tr.n;
        let d = lif_backward(tr, t_len, &self.lif(Layer::Tc1), &sp, false, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Tc1, d);
        let below = rec.trace(Layer::Conv3);
        let nf = below.n;
        let taps = spec.temporal_taps;
        {
            let gw = &mut grads.weights[Layer::Tc1.index()];
            for t in 0..t_len {
                for tap in 0..taps {
                    let Some(src) = (t + tap + 1).checked_sub(taps) else {
                        continue;
                    };
                    dense_weight_grad(
                        &mut gw[tap * nf * nt..(tap + 1) * nf * nt],
                        below.spikes_at(src),
                        &ext[t * nt..(t + 1) * nt],
                    );
                }
            }
        }
        if lowest >= Layer::Tc1 {
            return Ok((loss, grads));
        }
        let mut ext3 = vec![0.0; t_len * nf];
        let w_tc = self.params.weights(Layer::Tc1);
        for t in 0..t_len {
            for tap in 0..taps {
                // s3(t) feeds TC1 at time t + taps − 1 − tap
                let dst = t + taps - 1 - tap;
                if dst >= t_len {
                    continue;
                }
                dense_input_grad(
                    &w_tc[tap * nf * nt..(tap + 1) * nf * nt],
                    &ext[dst * nt..(dst + 1) * nt],
                    &mut ext3[t * nf..(t + 1) * nf],
                );
            }
        }

        // CONV3
        let mut ext = ext3;
        let tr = rec.trace(Layer::Conv3);
        let d = lif_backward(tr, t_len, &self.lif(Layer::Conv3), &sp, false, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Conv3, d);
        let g3 = spec.conv3();
        let n_pool = spec.pooled_len();
        for t in 0..t_len {
            conv_weight_grad(
                &g3,
                &rec.pooled[t * n_pool..(t + 1) * n_pool],
                &ext[t * nf..(t + 1) * nf],
                &mut grads.weights[Layer::Conv3.index()],
            );
        }
        if lowest >= Layer::Conv3 {
            return Ok((loss, grads));
        }
        let g2 = spec.conv2();
        let n2 = g2.out_len();
        let mut ext2 = vec![0.0; t_len * n2];
        let mut d_pool = vec![0.0; n_pool];
        for t in 0..t_len {
            d_pool.fill(0.0);
            conv_input_grad(&g3, self.params.weights(Layer::Conv3), &ext[t * nf..(t + 1) * nf], &mut d_pool);
            avg_pool_backward(&g2, spec.pool, &d_pool, &mut ext2[t * n2..(t + 1) * n2]);
        }

        // CONV2
        let mut ext = ext2;
        let tr = rec.trace(Layer::Conv2);
        let d = lif_backward(tr, t_len, &self.lif(Layer::Conv2), &sp, false, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Conv2, d);
        let below = rec.trace(Layer::Conv1);
        let n1 = below.n;
        for t in 0..t_len {
            conv_weight_grad(
                &g2,
                below.spikes_at(t),
                &ext[t * n2..(t + 1) * n2],
                &mut grads.weights[Layer::Conv2.index()],
            );
        }
        if lowest >= Layer::Conv2 {
            return Ok((loss, grads));
        }
        let mut ext1 = vec![0.0; t_len * n1];
        for t in 0..t_len {
            conv_input_grad(
                &g2,
                self.params.weights(Layer::Conv2),
                &ext[t * n2..(t + 1) * n2],
                &mut ext1[t * n1..(t + 1) * n1],
            );
        }

        // CONV1
        let mut ext = ext1;
        let tr = rec.trace(Layer::Conv1);
        let d = lif_backward(tr, t_len, &self.lif(Layer::Conv1), &sp, false, &mut ext, |_, _, _| {});
        record_decays(&mut grads, Layer::Conv1, d);
        let g1 = spec.conv1();
        let n_in = spec.input_len();
        for t in 0..t_len {
            conv_weight_grad(
                &g1,
                &rec.input[t * n_in..(t + 1) * n_in],
                &ext[t * n1..(t + 1) * n1],
                &mut grads.weights[Layer::Conv1.index()],
            );
        }
        Ok((loss, grads))
    }

    /// Propagates `∂L/∂I` of a dense layer to `∂L/∂s` of the layer below.
    fn dense_to_below(&self, layer: Layer, d_out: &[f64], n_below: usize) -> Vec<f64> {
        let t_len = self.spec.timesteps;
        let n_out = d_out.len() / t_len;
        let w = self.params.weights(layer);
        let mut d_in = vec![0.0; t_len * n_below];
        for t in 0..t_len {
            dense_input_grad(w, &d_out[t * n_out..(t + 1) * n_out], &mut d_in[t * n_below..(t + 1) * n_below]);
        }
        d_in
    }

    pub fn trial_gradient<X: Copy + Into<f64>>(&self, input: &[X], target: usize, lowest: Layer) -> Result<TrialGradient> {
        let rec = self.forward(input)?;
        let (loss, grads) = self.backward(&rec, target, lowest)?;
        Ok(TrialGradient {
            loss,
            prediction: rec.prediction(),
            grads,
        })
    }

    /// Batch-parallel gradients. Per-trial results are summed in input
    /// order, so the result does not depend on thread scheduling.
    pub fn batch_gradient<X: Copy + Into<f64> + Sync>(
        &self,
        batch: &[(&[X], usize)],
        lowest: Layer,
    ) -> Result<BatchGradient> {
        let per_trial: Vec<TrialGradient> = batch
            .par_iter()
            .map(|(x, y)| self.trial_gradient(x, *y, lowest))
            .collect::<Result<_>>()?;
        let mut grads = Gradients::zeros(&self.spec);
        let mut loss = 0.0;
        let mut correct = 0;
        for (tg, (_, y)) in per_trial.iter().zip(batch) {
            grads.add(&tg.grads);
            loss += tg.loss;
            correct += usize::from(tg.prediction == *y);
        }
        let n = batch.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok(BatchGradient {
            loss: loss / n,
            correct,
            grads,
        })
    }

    /// Class scores `y` for a trial.
    pub fn scores<X: Copy + Into<f64>>(&self, input: &[X]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.y)
    }

    pub fn predict<X: Copy + Into<f64>>(&self, input: &[X]) -> Result<usize> {
        Ok(argmax(&self.scores(input)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_input(spec: &NetworkSpec, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[]);
        (0..spec.timesteps * spec.input_len()).map(|_| r.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_input_is_silent() {
        let spec = NetworkSpec::reference(8).scaled(8);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 1).unwrap();
        let rec = net.forward(&vec![0.0f64; spec.timesteps * spec.input_len()]).unwrap();
        for tr in &rec.traces {
            assert!(tr.s.iter().all(|&s| s == 0.0));
        }
        assert!(rec.logits().iter().all(|&o| o == 0.0));
        assert_eq!(rec.y, vec![0.0, 0.0]);
        assert_eq!(rec.prediction(), 0);
    }

    #[test]
    fn reference_shapes() {
        let spec = NetworkSpec::reference(3);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 2).unwrap();
        let rec = net.forward(&random_input(&spec, 3)).unwrap();
        assert_eq!(rec.trace(Layer::Conv1).n, 64 * 8 * 9);
        assert_eq!(rec.trace(Layer::Conv2).n, 128 * 6 * 7);
        assert_eq!(rec.pooled.len(), 3 * 128 * 3 * 3);
        assert_eq!(rec.trace(Layer::Conv3).n, 256);
        assert_eq!(rec.logits().len(), 3 * 2);
        assert!(net.forward(&[0.0f64; 5]).is_err());
    }

    #[test]
    fn spikes_binary_and_sparse() {
        let spec = NetworkSpec::reference(20).scaled(8);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 4).unwrap();
        let rec = net.forward(&random_input(&spec, 5)).unwrap();
        for l in [Layer::Conv1, Layer::Conv2] {
            let tr = rec.trace(l);
            assert!(tr.s.iter().all(|&s| s == 0.0 || s == 1.0));
            let r = tr.rate();
            assert!(r > 0.0 && r < 1.0, "{l} rate {r}");
        }
    }

    #[test]
    fn aggregate_selects_and_averages() {
        let logits = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(temporal_aggregate(&logits, &[0.0, 1.0, 0.0]).unwrap(), vec![3.0, 4.0]);
        let mean = temporal_aggregate(&logits, &[1.0 / 3.0; 3]).unwrap();
        assert!((mean[0] - 3.0).abs() < 1e-15 && (mean[1] - 4.0).abs() < 1e-15);
        assert!(temporal_aggregate(&logits, &[1.0; 4]).is_err());
    }

    #[test]
    fn aggregate_matches_dot_products() {
        let mut r = rng::stream(9, &[]);
        let t = 37;
        let logits: Vec<f64> = (0..t * 2).map(|_| r.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..t).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = temporal_aggregate(&logits, &w).unwrap();
        for c in 0..2 {
            let dot: f64 = (0..t).map(|k| w[k] * logits[k * 2 + c]).sum();
            assert!((y[c] - dot).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_weight_gradient_is_closed_form() {
        let spec = NetworkSpec::reference(12).scaled(16);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 6).unwrap();
        let rec = net.forward(&random_input(&spec, 7)).unwrap();
        let (_, g) = net.backward(&rec, 1, Layer::Conv1).unwrap();
        let (_, dy) = softmax_cross_entropy(&rec.y, 1);
        for t in 0..spec.timesteps {
            let want: f64 = (0..2).map(|c| dy[c] * rec.logits()[t * 2 + c]).sum();
            assert!((g.w_ts[t] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_window_blocks_gradient() {
        let spec = NetworkSpec::reference(6).scaled(16);
        let mut neuron = NeuronConfig::default();
        neuron.surrogate.window = 1e-300;
        let net = Network::init(spec.clone(), neuron, 8).unwrap();
        let rec = net.forward(&random_input(&spec, 9)).unwrap();
        let (_, g) = net.backward(&rec, 0, Layer::Conv1).unwrap();
        // only the non-spiking readout can receive gradient
        for l in &Layer::ALL[..6] {
            assert!(g.weights(*l).iter().all(|&x| x == 0.0), "{l}");
        }
        assert!(g.weights(Layer::Fc2).iter().any(|&x| x != 0.0) || rec.trace(Layer::Fc1).rate() == 0.0);
    }

    #[test]
    fn batch_gradient_is_deterministic() {
        let spec = NetworkSpec::reference(6).scaled(16);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 10).unwrap();
        let inputs: Vec<Vec<f64>> = (0..6).map(|k| random_input(&spec, 20 + k)).collect();
        let batch: Vec<(&[f64], usize)> = inputs.iter().enumerate().map(|(k, x)| (x.as_slice(), k % 2)).collect();
        let a = net.batch_gradient(&batch, Layer::Conv1).unwrap();
        let b = net.batch_gradient(&batch, Layer::Conv1).unwrap();
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    }

    #[test]
    fn lowest_layer_truncates_backward() {
        let spec = NetworkSpec::reference(6).scaled(16);
        let net = Network::init(spec.clone(), NeuronConfig::default(), 11).unwrap();
        let rec = net.forward(&random_input(&spec, 12)).unwrap();
        let (_, full) = net.backward(&rec, 0, Layer::Conv1).unwrap();
        let (_, top) = net.backward(&rec, 0, Layer::Fc1).unwrap();
        assert_eq!(full.weights(Layer::Fc1), top.weights(Layer::Fc1));
        assert_eq!(full.weights(Layer::Fc2), top.weights(Layer::Fc2));
        assert!(top.weights(Layer::R1).iter().all(|&x| x == 0.0));
    }
}
