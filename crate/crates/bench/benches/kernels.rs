use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sfrc::matpoint::return_map;
use sfrc::surrogate::{backward, forward, loss_and_gradient};
use sfrc_bench::{gru_batch, plastic_composite, plastic_matrix};
use std::hint::black_box;

fn constitutive(c: &mut Criterion) {
    let (params, state, d) = plastic_matrix();
    c.bench_function("return_map/plastic", |b| b.iter(|| return_map(black_box(&state), black_box(&d), &params).unwrap()));

    let (composite, state, d) = plastic_composite();
    let mut group = c.benchmark_group("composite");
    group.sample_size(20);
    group.bench_function("step/plastic", |b| b.iter(|| composite.step(black_box(&state), black_box(&d)).unwrap()));
    group.finish();
}

fn network(c: &mut Criterion) {
    let (steps, batch) = (200, 32);
    let (params, x, y) = gru_batch(&[64, 64], steps, batch);
    let mut group = c.benchmark_group("gru_2x64_200x32");
    group.sample_size(10);
    group.bench_function("forward", |b| b.iter(|| forward(&params, black_box(&x), steps, batch, None).unwrap()));
    group.bench_function("backward", |b| {
        b.iter_batched(
            || forward(&params, &x, steps, batch, None).unwrap(),
            |(out, cache)| backward(&params, &cache, &(out - &y)),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("loss_and_gradient", |b| {
        b.iter(|| loss_and_gradient(&params, black_box(&x), &y, steps, batch, None, 1e-4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, constitutive, network);
criterion_main!(benches);
