//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::path::Path;
use std::time::Instant;

use finsler_cli::{run, RunOptions, Subcommand};
use finsler_core::connection::chern_coefficients;
use finsler_core::curvature::{
    flag_curvature, laplacian_comparison_probe, mixed_weighted_ricci, s_curvature, t_tensor, u_tensor, ProbeReference,
    Weight,
};
use finsler_core::expr::Expr;
use finsler_core::grid::{GridDomain, ScalarField};
use finsler_core::metric::{eval_metric, fundamental_tensor, misalignment, Measure, MetricSpec};
use finsler_core::operators::{bochner_residual, composition_identity, first_variation, FieldJet, RadialExpHarmonic};
use finsler_core::solver::{
    fitted_field_jet, harmonic_solve, liouville_experiment, log_log_slope, solve_dirichlet, BoundaryData,
    LiouvilleConfig, LiouvilleRecord, SolverConfig,
};
use finsler_core::ChartBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn point(spec: &MetricSpec, r: &mut ChaCha8Rng, shrink: f64) -> Vec<f64> {
    let c = spec.chart();
    (0..spec.dim())
        .map(|d| {
            let mid = 0.5 * (c.lo[d] + c.hi[d]);
            let half = 0.5 * (c.hi[d] - c.lo[d]) * shrink;
            r.gen_range(mid - half..mid + half)
        })
        .collect()
}

fn direction(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() > 1e-2 {
            return v;
        }
    }
}

fn unit(spec: &MetricSpec, x: &[f64], v: &[f64]) -> Vec<f64> {
    let f = eval_metric(spec, x, v).unwrap();
    v.iter().map(|c| c / f).collect()
}

/// Space forms carrying their Riemannian volume, with sectional curvature.
fn space_forms(n: usize) -> Vec<(&'static str, MetricSpec, f64)> {
    vec![
        ("flat", MetricSpec::euclidean(n), 0.0),
        ("sphere", MetricSpec::sphere_chart(n).with_riemannian_volume().unwrap(), 1.0),
        ("hyperbolic", MetricSpec::hyperbolic_chart(n).with_riemannian_volume().unwrap(), -1.0),
    ]
}

/// Christoffel symbols `Γ^i_jk` of `4δ/(1 + σ|x|²)²` in closed form.
fn conformal_christoffel(sigma: f64, x: &[f64], i: usize, j: usize, k: usize) -> f64 {
    let q = 1.0 + sigma * x.iter().map(|c| c * c).sum::<f64>();
    let df = |m: usize| -2.0 * sigma * x[m] / q;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    d(i, j) * df(k) + d(i, k) * df(j) - d(j, k) * df(i)
}

fn c1_riemannian_reduction() -> Verdict {
    let mut worst = [0.0f64; 6];
    for n in [2usize, 3] {
        for (name, spec, _) in space_forms(n) {
            let sigma = match name {
                "flat" => 0.0,
                "sphere" => 1.0,
                _ => -1.0,
            };
            let mut r = rng(100 + n as u64);
            for _ in 0..10 {
                let x = point(&spec, &mut r, 0.9);
                let y = unit(&spec, &x, &direction(n, &mut r));
                let w = unit(&spec, &x, &direction(n, &mut r));
                let frame = fundamental_tensor(&spec, &x, &y).unwrap();
                worst[0] = worst[0].max(frame.cartan.as_slice().iter().fold(0.0, |m, c| m.max(c.abs())));
                worst[2] = worst[2].max(s_curvature(&spec, &x, &y).unwrap().s.abs());
                worst[3] = worst[3].max(t_tensor(&spec, &x, &y, &w).unwrap().dual_norm);
                let u = u_tensor(&spec, &x, &y, &w, None).unwrap();
                let closed = u.closed_form.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                worst[4] = worst[4].max(u.norm).max(closed);
                let gamma = chern_coefficients(&spec, &x, &y).unwrap();
                let mut scale: f64 = 1.0;
                let mut diff: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let exact = conformal_christoffel(sigma, &x, i, j, k);
                            scale = scale.max(exact.abs());
                            diff = diff.max((gamma.get(i, j, k) - exact).abs());
                        }
                    }
                }
                worst[5] = worst[5].max(diff / scale);
            }
            let x = point(&spec, &mut r, 0.9);
            worst[1] = worst[1].max((misalignment(&spec, &x, 16).unwrap().value - 1.0).abs());
        }
    }
    let pass = worst[0] == 0.0
        && worst[1] <= 1e-12
        && worst[2] <= 1e-12
        && worst[3] <= 1e-12
        && worst[4] <= 1e-8
        && worst[5] <= 1e-6;
    verdict(
        pass,
        format!(
            "max|C| = {:.1e}, |α−1| = {:.1e}, |S| = {:.1e}, |𝒯| = {:.1e}, |U| = {:.1e}, Γ rel err = {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    )
}

fn c2_constant_curvature() -> Verdict {
    let mut k_err: f64 = 0.0;
    let mut ric_err: f64 = 0.0;
    let mut flags = 0;
    for n in [2usize, 3] {
        for (_, spec, k) in space_forms(n) {
            let mut r = rng(200 + n as u64);
            for _ in 0..50 {
                let x = point(&spec, &mut r, 0.9);
                let y = direction(n, &mut r);
                let u = direction(n, &mut r);
                k_err = k_err.max((flag_curvature(&spec, &x, &y, &u).unwrap() - k).abs());
                let yu = unit(&spec, &x, &y);
                let ric = mixed_weighted_ricci(&spec, &x, &yu, &yu, Weight::Infinite).unwrap();
                let v = ric.value().unwrap_or(f64::NEG_INFINITY);
                ric_err = ric_err.max((v - (n as f64 - 1.0) * k).abs());
                flags += 1;
            }
        }
    }
    verdict(
        k_err <= 1e-6 && ric_err <= 1e-6,
        format!("{flags} flags: max|K − K₀| = {k_err:.1e}, max|Ric^∞(Y,Y) − (n−1)K₀| = {ric_err:.1e}"),
    )
}

fn c3_euler_lagrange() -> Verdict {
    let randers = MetricSpec::randers(
        &[vec!["1 + 0.2*x2^2", "0.1*x1"], vec!["0.1*x1", "1"]],
        &["0.3 + 0.2*x2", "0.1*x1"],
    )
    .unwrap()
    .with_measure(Measure::gaussian(2))
    .unwrap();
    let specs = [("flat", MetricSpec::euclidean(2)), ("randers+gaussian", randers)];
    let d = GridDomain::square(-0.8, 0.8, 65).unwrap();
    let cell: f64 = d.spacing().iter().product();
    let data = BoundaryData::Expr(Expr::parse("x1^2 - x2^2 + 0.5*sin(3*x1)").unwrap());
    let mut worst: f64 = 0.0;
    for (_, spec) in &specs {
        let u = solve_dirichlet(&d, &data, spec, &SolverConfig::default()).unwrap();
        let mut r = rng(300);
        for _ in 0..20 {
            let mut v = ScalarField::zeros(d.clone());
            for k in 0..d.len() {
                if d.depth(k) >= 2 {
                    v.values[k] = r.gen_range(-1.0..1.0);
                }
            }
            let norm = (v.values.iter().map(|c| c * c).sum::<f64>() * cell).sqrt();
            let fv = first_variation(&u, &v, spec, 1e-6).unwrap();
            worst = worst.max(fv.numeric.abs() / norm);
        }
    }
    verdict(
        worst <= 1e-5,
        format!("2 specs × 20 directions on 64² cells: max |d𝔼(u+tv)/dt|/‖v‖ = {worst:.2e} (≤ 1e-5)"),
    )
}

fn c4_bochner() -> Verdict {
    // analytic exp-harmonic fields
    let mut analytic: f64 = 0.0;
    let minkowski = MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.5", "0"]).unwrap();
    let affine = FieldJet::from_expr(&[0.1, 0.2], &Expr::parse("0.4*x1 - 1.1*x2 + 3").unwrap());
    analytic = analytic.max(bochner_residual(&affine, &minkowski, None).unwrap().residual.abs());
    analytic = analytic.max(bochner_residual(&affine, &MetricSpec::euclidean(2), None).unwrap().residual.abs());
    for n in [2usize, 3] {
        let spec = MetricSpec::euclidean(n).with_chart(ChartBox::cube(n, 4.0)).unwrap();
        let field = RadialExpHarmonic {
            center: vec![0.0; n],
            c: 0.7,
        };
        let mut r = rng(400 + n as u64);
        for _ in 0..20 {
            let d = direction(n, &mut r);
            let len = d.iter().map(|c| c * c).sum::<f64>().sqrt();
            let rad = r.gen_range(1.2..3.0);
            let x: Vec<f64> = d.iter().map(|c| rad * c / len).collect();
            analytic = analytic.max(bochner_residual(&field.field_jet(&x), &spec, None).unwrap().residual.abs());
        }
    }

    // solver outputs under refinement
    let exact = RadialExpHarmonic {
        center: vec![0.0, 0.0],
        c: 0.8,
    };
    let spec = MetricSpec::euclidean(2).with_chart(ChartBox::cube(2, 3.0)).unwrap();
    let probes: Vec<Vec<f64>> = [1.25, 1.5, 1.75]
        .iter()
        .flat_map(|&a| [0.75, 1.0, 1.25].map(|b| vec![a, b]))
        .collect();
    let residuals: Vec<f64> = [33usize, 65, 129]
        .iter()
        .map(|&nodes| {
            let d = GridDomain::new(vec![1.0, 0.5], vec![2.0, 1.5], vec![nodes, nodes]).unwrap();
            let data = BoundaryData::Nodal(ScalarField::from_fn(d.clone(), |p| exact.value(p)));
            let f = solve_dirichlet(&d, &data, &spec, &SolverConfig::default()).unwrap();
            probes
                .iter()
                .map(|p| {
                    let fj = fitted_field_jet(&f, d.nearest(p)).unwrap();
                    bochner_residual(&fj, &spec, Some(1e-2)).unwrap().residual.abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let orders = [
        (residuals[0] / residuals[1]).log2(),
        (residuals[1] / residuals[2]).log2(),
    ];
    verdict(
        analytic <= 1e-10 && orders.iter().all(|o| *o >= 1.8),
        format!(
            "analytic max residual = {analytic:.1e}; solver residuals 32/64/128 = {:.2e}/{:.2e}/{:.2e}, orders {:.2}, {:.2}",
            residuals[0], residuals[1], residuals[2], orders[0], orders[1]
        ),
    )
}

fn c5_composition() -> Verdict {
    let phis: [(&str, fn(f64) -> (f64, f64)); 3] = [
        ("s^2", |s| (2.0 * s, 2.0)),
        ("exp", |s| (s.exp(), s.exp())),
        ("s^3", |s| (3.0 * s * s, 6.0 * s)),
    ];
    let spec = MetricSpec::euclidean(2).with_chart(ChartBox::cube(2, 4.0)).unwrap();
    let field = RadialExpHarmonic {
        center: vec![0.0, 0.0],
        c: 1.3,
    };
    let minkowski = MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.5", "0"]).unwrap();
    let affine = Expr::parse("0.4*x1 - 1.1*x2 + 3").unwrap();
    let mut r = rng(500);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let t = r.gen_range(0.0..std::f64::consts::TAU);
        let rad = r.gen_range(1.2..3.0);
        let x = [rad * t.cos(), rad * t.sin()];
        let radial = field.field_jet(&x);
        let lin = FieldJet::from_expr(&[0.2 * t.cos(), 0.2 * t.sin()], &affine);
        for (_, phi) in &phis {
            worst = worst.max(composition_identity(&radial, phi, &spec, None).unwrap().abs());
            worst = worst.max(composition_identity(&lin, phi, &minkowski, None).unwrap().abs());
        }
    }
    verdict(
        worst <= 1e-8,
        format!("50 points × {{s², exp, s³}} on radial and Minkowski-affine fields: max residual = {worst:.1e}"),
    )
}

fn c6_laplacian_comparison() -> Verdict {
    let mut exact_err: f64 = 0.0;
    let mut margin: f64 = f64::NEG_INFINITY;
    for n in [2usize, 3] {
        let spec = MetricSpec::euclidean(n);
        let mut r = rng(600 + n as u64);
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|_| loop {
                let x = point(&spec, &mut r, 0.95);
                if x.iter().map(|c| c * c).sum::<f64>() > 0.01 {
                    break x;
                }
            })
            .collect();
        for weight in [n as f64, n as f64 + 1.0, n as f64 + 3.0] {
            let rows = laplacian_comparison_probe(
                &spec,
                &vec![0.0; n],
                &samples,
                weight,
                0.0,
                Some(1.0),
                &ProbeReference::GradientOfDistance,
            )
            .unwrap();
            for row in rows {
                exact_err = exact_err.max((row.laplacian - (n as f64 - 1.0) / row.r).abs());
                margin = margin.max(row.margin);
            }
        }
    }
    verdict(
        exact_err <= 1e-8 && margin <= 1e-8,
        format!("max|Δr − (n−1)/r| = {exact_err:.1e}; max margin over N ∈ {{n, n+1, n+3}} = {margin:.1e}"),
    )
}

fn c7_gradient_estimate(flat: &[LiouvilleRecord]) -> Verdict {
    let at = |a: f64| flat.iter().find(|r| r.radius == a).unwrap();
    let (r4, r8) = (at(4.0), at(8.0));
    let change = r8.empirical_c / r4.empirical_c - 1.0;
    let h_change = r8.max_h / r4.max_h - 1.0;
    verdict(
        change.abs() <= 0.1,
        format!(
            "empirical C(4) = {:.3e}, C(8) = {:.3e}, relative change {:+.1}% (max H changes {:+.1}%)",
            r4.empirical_c,
            r8.empirical_c,
            100.0 * change,
            100.0 * h_change
        ),
    )
}

fn c8_liouville(flat: &[LiouvilleRecord], gaussian: &[LiouvilleRecord]) -> Verdict {
    let judge = |recs: &[LiouvilleRecord]| {
        let e: Vec<f64> = recs.iter().map(|r| r.center_energy).collect();
        let a: Vec<f64> = recs.iter().map(|r| r.radius).collect();
        let decreasing = e.windows(2).all(|w| w[1] < w[0]);
        let slope = log_log_slope(&a[a.len() - 3..], &e[e.len() - 3..]);
        (decreasing && slope <= -0.4, e, slope)
    };
    let (pf, ef, sf) = judge(flat);
    let (pg, eg, sg) = judge(gaussian);
    let fmt = |e: &[f64]| e.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ");
    verdict(
        pf && pg,
        format!(
            "flat e(x₀) = [{}], slope {sf:.2}; gaussian e(x₀) = [{}], slope {sg:.2}",
            fmt(&ef),
            fmt(&eg)
        ),
    )
}

fn c9_harmonic_differs() -> Verdict {
    let data = BoundaryData::Expr(Expr::parse("x1^2 - x2^2").unwrap());
    let spec = MetricSpec::euclidean(2);
    let coarse = GridDomain::square(-1.0, 1.0, 65).unwrap();
    let fine = GridDomain::square(-1.0, 1.0, 129).unwrap();
    let exp_c = solve_dirichlet(&coarse, &data, &spec, &SolverConfig::default()).unwrap();
    let exp_f = solve_dirichlet(&fine, &data, &spec, &SolverConfig::default()).unwrap();
    let har_c = harmonic_solve(&coarse, &data).unwrap();
    let har_f = harmonic_solve(&fine, &data).unwrap();
    // grid tolerance: largest change of either solution under one refinement
    let mut grid_tol: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for k in 0..coarse.len() {
        let kf = fine.nearest(&coarse.point(k));
        grid_tol = grid_tol
            .max((exp_c.values[k] - exp_f.values[kf]).abs())
            .max((har_c.values[k] - har_f.values[kf]).abs());
        if !coarse.is_boundary(k) {
            gap = gap.max((exp_c.values[k] - har_c.values[k]).abs());
        }
    }
    verdict(
        gap > 10.0 * grid_tol,
        format!("interior max |u_exp − u_harm| = {gap:.3e}; grid tolerance = {grid_tol:.2e}; ratio {:.0}", gap / grid_tol),
    )
}

fn c10_determinism() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    let mut sizes = Vec::new();
    for (cmd, cfg, file) in [
        (Subcommand::Tensors, "randers.toml", "tensors.csv"),
        (Subcommand::Solve, "solve_randers.toml", "field.csv"),
    ] {
        let bytes: Vec<Vec<u8>> = ["a", "b"]
            .iter()
            .map(|tag| {
                let mut opts = RunOptions::new(configs.join(cfg), dir.path().join(format!("{}-{tag}", cmd.name())));
                opts.seed = Some(42);
                run(cmd, &opts).unwrap();
                std::fs::read(opts.out.join(file)).unwrap()
            })
            .collect();
        same &= bytes[0] == bytes[1];
        sizes.push(format!("{file} {} bytes", bytes[0].len()));
    }
    verdict(same, format!("two runs with seed 42: {} {}", sizes.join(", "), if same { "identical" } else { "differ" }))
}

fn liouville(spec: MetricSpec) -> Vec<LiouvilleRecord> {
    let spec = spec.with_chart(ChartBox::cube(2, 20.0)).unwrap();
    let cfg = LiouvilleConfig {
        resolution: 129,
        ..LiouvilleConfig::default()
    };
    liouville_experiment(&spec, &[0.0, 0.0], &[2.0, 4.0, 8.0, 16.0], 1.0, &cfg)
        .unwrap()
        .records
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // nothing to enumerate for test runners
        return;
    }
    let start = Instant::now();
    let flat = liouville(MetricSpec::euclidean(2));
    let gaussian = liouville(MetricSpec::euclidean(2).with_measure(Measure::gaussian(2)).unwrap());
    let liouville_time = start.elapsed().as_secs_f64();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("Riemannian reduction", Box::new(c1_riemannian_reduction)),
        ("constant-curvature oracle", Box::new(c2_constant_curvature)),
        ("Euler-Lagrange criticality", Box::new(c3_euler_lagrange)),
        ("Bochner identity", Box::new(c4_bochner)),
        ("composition identity", Box::new(c5_composition)),
        ("Laplacian comparison (flat)", Box::new(c6_laplacian_comparison)),
        ("gradient-estimate constant stability", Box::new(|| c7_gradient_estimate(&flat))),
        ("Liouville decay", Box::new(|| c8_liouville(&flat, &gaussian))),
        ("harmonic differs from exp-harmonic", Box::new(c9_harmonic_differs)),
        ("determinism", Box::new(c10_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        let mut secs = t.elapsed().as_secs_f64();
        if i == 7 {
            secs += liouville_time;
        }
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({secs:.1} s) {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
