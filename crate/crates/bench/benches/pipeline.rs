//! Whole-pipeline benchmarks: one classification forward, one training
//! sample (forward + backward), and heatmap rendering on a large image.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use simnet_core::init::seeded_rng;
use simnet_core::interpret::{bilinear_upsample, weighted_sum};
use simnet_core::model::{AblationMask, ModelSpec, Network};
use simnet_core::tensor::Tensor;
use std::hint::black_box;

fn random_image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = seeded_rng(seed);
    Tensor::new(
        &[1, h, w],
        (0..h * w).map(|_| rng.random_range(0.0f32..1.0)).collect(),
    )
    .unwrap()
}

fn bench_forward(c: &mut Criterion) {
    let net = Network::<f32>::init(ModelSpec::lenet(), 1).unwrap();
    let image = random_image(28, 28, 2);
    let mask = AblationMask::empty(16);
    c.bench_function("classify 28x28", |b| {
        b.iter(|| net.classify(black_box(&image), black_box(&mask)).unwrap())
    });
    c.bench_function("loss_and_gradients 28x28", |b| {
        b.iter(|| net.loss_and_gradients(black_box(&image), 3).unwrap())
    });
}

fn bench_heatmap(c: &mut Criterion) {
    let net = Network::<f32>::init(ModelSpec::lenet(), 1).unwrap();
    let image = random_image(224, 224, 3);
    let stack = net.features(&image).unwrap();
    let weights = vec![1.0 / 16.0; 16];
    c.bench_function("features 224x224", |b| {
        b.iter(|| net.features(black_box(&image)).unwrap())
    });
    c.bench_function("heatmap blend + upsample 224x224", |b| {
        b.iter(|| {
            let raw = weighted_sum(black_box(&stack), black_box(&weights)).unwrap();
            bilinear_upsample(&raw, 224, 224).unwrap()
        })
    });
}

criterion_group!(benches, bench_forward, bench_heatmap);
criterion_main!(benches);
