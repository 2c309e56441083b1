use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dasr_core::degradations::{corpus, sweep, Axis};
use dasr_core::diffusion::{gradcheck_all, DiffusionSchedule};
use dasr_core::sani::forward_moments;
use dasr_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_sweep(c: &mut Criterion) {
    let images = corpus();
    let levels = Axis::Blur.default_levels();
    let mut group = c.benchmark_group("sweep_blur");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(black_box(&images), Axis::Blur, &levels, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_moments(c: &mut Criterion) {
    let schedule = DiffusionSchedule::default();
    let mut group = c.benchmark_group("forward_moments_1e6");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                forward_moments(0.3, 0.5, 0.6, 500, &schedule, black_box(1_000_000), 7, exec).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_gradcheck(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradcheck");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gradcheck_all(black_box(0), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_moments, bench_gradcheck);
criterion_main!(benches);
