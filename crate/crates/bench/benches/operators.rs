use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flandau_bench::{datum, grids, params};
use flandau_core::collision::CollisionOperator;
use flandau_core::grid::Transport;
use std::hint::black_box;

fn coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("coefficients");
    group.sample_size(10);
    for (label, grid) in grids() {
        let op = CollisionOperator::new(grid, params(), false).unwrap();
        let f = datum(grid);
        group.bench_with_input(BenchmarkId::from_parameter(label), &f, |b, f| {
            b.iter(|| black_box(op.coefficients(f).unwrap()))
        });
    }
    group.finish();
}

fn apply_q(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_q");
    group.sample_size(10);
    for (label, grid) in grids() {
        let op = CollisionOperator::new(grid, params(), false).unwrap();
        let f = datum(grid);
        group.bench_with_input(BenchmarkId::from_parameter(label), &f, |b, f| {
            b.iter(|| black_box(op.apply(f).unwrap()))
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let mut group = c.benchmark_group("transport");
    for (label, grid) in grids() {
        let t = Transport::new(grid, 0.01);
        let f = datum(grid);
        let mut scratch = vec![0.0; grid.len()];
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                let mut v = f.values.clone();
                t.apply(&mut v, &mut scratch);
                black_box(v)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, coefficients, apply_q, transport);
criterion_main!(benches);
