//! Sequential (one-thread pool) against parallel (default pool) kernels.
//! Run with `--no-default-features` to measure the plain-iterator build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use irnet_core::ops::{conv2d, conv2d_backward_input, conv2d_backward_weights, ConvWeights};
use irnet_core::{IrnetModel, ModelConfig, Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let seq = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let par = ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", seq), ("parallel", par)]
}

fn inputs(c: usize, size: usize) -> (Tensor, ConvWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform(Shape::new(1, c, size, size), 0.0, 1.0, &mut rng);
    let kernel = Tensor::randn(Shape::new(c, c, 3, 3), 0.05, &mut rng);
    let bias = Tensor::zeros(Shape::new(1, c, 1, 1));
    (x, ConvWeights::new(kernel, bias).unwrap())
}

fn conv_forward(c: &mut Criterion) {
    let (x, w) = inputs(64, 64);
    let mut g = c.benchmark_group("conv2d_forward_64ch_64px");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| conv2d(black_box(&x), &w, 1).unwrap()))
        });
    }
    g.finish();
}

fn conv_backward(c: &mut Criterion) {
    let (x, w) = inputs(64, 64);
    let gy = conv2d(&x, &w, 1).unwrap();
    let mut g = c.benchmark_group("conv2d_backward_64ch_64px");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| {
                b.iter(|| {
                    let gx = conv2d_backward_input(&gy, x.shape(), &w.kernel, 1).unwrap();
                    let gw = conv2d_backward_weights(&gy, &x, w.kernel.shape(), 1).unwrap();
                    black_box((gx, gw))
                })
            })
        });
    }
    g.finish();
}

fn model_forward(c: &mut Criterion) {
    let model = IrnetModel::build(ModelConfig::itm(), 0).unwrap();
    let x = Tensor::uniform(
        Shape::new(1, 3, 64, 64),
        0.0,
        1.0,
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let mut g = c.benchmark_group("itm_forward_64px");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| model.forward(black_box(&x)).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, conv_forward, conv_backward, model_forward);
criterion_main!(benches);
