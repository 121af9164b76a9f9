use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ferrosyn::device_model::{delta_w, FerroKernelParams, Polarity};
use ferrosyn::optimizer::{adam_step, AdamConfig, AdamState};
use ferrosyn::rng;
use ferrosyn::snn::Layer;
use ferrosyn::weight_fabric::{DifferentialSynapseArray, LayerBound, ProgrammingPolicy};
use ferrosyn_bench::{network, trials};

fn kernel(c: &mut Criterion) {
    let p = FerroKernelParams::MEASURED_DEVICE;
    let ws: Vec<f64> = (0..1024).map(|k| k as f64 / 1023.0).collect();
    c.bench_function("delta_w/1024", |b| {
        b.iter(|| ws.iter().map(|&w| delta_w(w, Polarity::Ltp, &p).unwrap()).sum::<f64>())
    });
}

fn commit(c: &mut Criterion) {
    let n = 65_536;
    let bound = LayerBound::from_fan_in(576);
    let weights = vec![0.0; n];
    let deltas: Vec<f64> = (0..n).map(|k| ((k * 7919 % 1000) as f64 / 1000.0 - 0.5) * 0.01).collect();
    let policy = ProgrammingPolicy::default();
    let params = FerroKernelParams::MEASURED_DEVICE;
    c.bench_function("accumulate_commit/65536", |b| {
        let mut arr = DifferentialSynapseArray::from_weights("bench", &weights, bound);
        let mut r = rng::stream(0, &[]);
        b.iter(|| {
            arr.accumulate(&deltas).unwrap();
            black_box(arr.commit(&policy, &params, &mut r).unwrap().total())
        })
    });
}

fn adam(c: &mut Criterion) {
    let n = 100_000;
    let g = vec![0.01; n];
    c.bench_function("adam_step/100000", |b| {
        let mut s = AdamState::new(AdamConfig::default(), [("w", n)]);
        b.iter(|| black_box(adam_step(&mut s, &[&g], 1e-3).unwrap()))
    });
}

fn network_passes(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    g.sample_size(10);
    for div in [8usize, 4] {
        let net = network(div, 40);
        let data = trials(16, 40);
        let x = &data[0].input;
        g.bench_with_input(BenchmarkId::new("forward", div), &div, |b, _| b.iter(|| black_box(net.forward(x).unwrap())));
        g.bench_with_input(BenchmarkId::new("forward_backward", div), &div, |b, _| {
            b.iter(|| black_box(net.trial_gradient(x, 1, Layer::Conv1).unwrap()))
        });
        let batch: Vec<(&[f32], usize)> = data.iter().map(|t| (t.input.as_slice(), t.label.class())).collect();
        g.bench_with_input(BenchmarkId::new("batch16", div), &div, |b, _| {
            b.iter(|| black_box(net.batch_gradient(&batch, Layer::Conv1).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, kernel, commit, adam, network_passes);
criterion_main!(benches);
