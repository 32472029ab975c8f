//! Kernel timings at the resolutions the experiments use.
//! Run with: cargo bench -p qg3-bench

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qg3_core::dynamics::{self_advection, Model};
use qg3_core::{InitialDatum, SimConfig};

fn model(n: usize) -> (Model, qg3_core::LayerField) {
    let cfg = SimConfig {
        nx: n,
        ny: n,
        dt: 1e-3,
        initial: InitialDatum::Random {
            seed: 1,
            amplitude: 1.0,
            max_mode: 8,
        },
        ..SimConfig::default()
    };
    let model = Model::build(&cfg).unwrap();
    let q = cfg.initial.build(model.basis()).unwrap();
    (model, q)
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    for n in [16, 32, 64] {
        let (model, q) = model(n);
        let basis = model.basis();
        let grid = basis.to_grid(&q).unwrap();

        group.bench_with_input(BenchmarkId::new("to_grid", n), &q, |b, q| {
            b.iter(|| basis.to_grid(black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("to_spectral", n), &grid, |b, g| {
            b.iter(|| basis.to_spectral(black_box(g)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("elliptic_solve", n), &q, |b, q| {
            b.iter(|| model.solver().solve(black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("transport", n), &q, |b, q| {
            b.iter(|| self_advection(model.solver(), black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("step", n), &q, |b, q| {
            let mut state = model.start(q, 0).unwrap();
            b.iter(|| model.step(&mut state).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
