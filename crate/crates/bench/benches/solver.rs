use criterion::{criterion_group, criterion_main, Criterion};
use finsler_core::expr::Expr;
use finsler_core::grid::GridDomain;
use finsler_core::metric::MetricSpec;
use finsler_core::solver::{harmonic_solve, solve_dirichlet, BoundaryData, SolverConfig};

fn solver(c: &mut Criterion) {
    let data = BoundaryData::Expr(Expr::parse("x1^2 - x2^2 + 0.5*sin(3*x1)").unwrap());
    let spec = MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.2*x1", "0.1"]).unwrap();
    let mut group = c.benchmark_group("dirichlet");
    group.sample_size(10);
    for nodes in [17usize, 33] {
        let d = GridDomain::square(-0.8, 0.8, nodes).unwrap();
        group.bench_function(format!("exp_harmonic/randers/{nodes}"), |b| {
            b.iter(|| solve_dirichlet(&d, &data, &spec, &SolverConfig::default()).unwrap())
        });
        group.bench_function(format!("harmonic/{nodes}"), |b| b.iter(|| harmonic_solve(&d, &data).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, solver);
criterion_main!(benches);
