use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use finsler_core::curvature::{flag_curvature, mixed_weighted_ricci, s_curvature, Weight};
use finsler_core::metric::{fundamental_tensor, MetricSpec};

fn randers() -> MetricSpec {
    MetricSpec::randers(
        &[vec!["1 + 0.2*x2^2", "0.1*x1"], vec!["0.1*x1", "1"]],
        &["0.3 + 0.1*x2", "0.2*x1"],
    )
    .unwrap()
}

fn geometry(c: &mut Criterion) {
    let spec = randers();
    let (x, y, u) = ([0.1, -0.2], [0.6, 0.3], [-0.2, 0.9]);
    c.bench_function("fundamental_tensor/randers2", |b| {
        b.iter(|| fundamental_tensor(&spec, black_box(&x), black_box(&y)).unwrap())
    });
    c.bench_function("flag_curvature/randers2", |b| {
        b.iter(|| flag_curvature(&spec, black_box(&x), black_box(&y), black_box(&u)).unwrap())
    });
    c.bench_function("s_curvature/randers2", |b| {
        b.iter(|| s_curvature(&spec, black_box(&x), black_box(&y)).unwrap())
    });
    c.bench_function("mixed_weighted_ricci/randers2", |b| {
        b.iter(|| mixed_weighted_ricci(&spec, black_box(&x), &y, &u, Weight::Infinite).unwrap())
    });
}

criterion_group!(benches, geometry);
criterion_main!(benches);
