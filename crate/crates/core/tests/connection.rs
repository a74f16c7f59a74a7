mod common;

use common::*;
use finsler_core::connection::*;
use finsler_core::expr::Expr;
use finsler_core::metric::{ChartBox, MetricSpec};
use proptest::prelude::*;

#[test]
fn riemannian_spray_matches_christoffel_oracle() {
    let spec = MetricSpec::riemannian(&[
        vec!["1 + 0.3*x1^2", "0.2*x1*x2"],
        vec!["0.2*x1*x2", "2 + sin(x2)"],
    ])
    .unwrap();
    let mut r = rng(1);
    for _ in 0..20 {
        let x = point(&spec, &mut r, 0.9);
        let y = direction(2, &mut r);
        let gamma = christoffel_fd(&spec, &x);
        let g = spray_coeffs(&spec, &x, &y).unwrap();
        let nl = nonlinear_connection(&spec, &x, &y).unwrap();
        let c = chern_connection(&spec, &x, &y).unwrap();
        for i in 0..2 {
            let mut expect = 0.0;
            for j in 0..2 {
                let mut nij = 0.0;
                for k in 0..2 {
                    expect += 0.5 * gamma.get(i, j, k) * y[j] * y[k];
                    nij += gamma.get(i, j, k) * y[k];
                    assert!((c.chern.get(i, j, k) - gamma.get(i, j, k)).abs() < 1e-6);
                }
                assert!((nl[(i, j)] - nij).abs() < 1e-6);
            }
            assert!((g[i] - expect).abs() < 1e-6);
        }
    }
}

#[test]
fn sphere_chart_chern_matches_conformal_closed_form() {
    let spec = MetricSpec::sphere_chart(3);
    let mut r = rng(2);
    for _ in 0..20 {
        let x = point(&spec, &mut r, 0.95);
        let y = direction(3, &mut r);
        let c = chern_connection(&spec, &x, &y).unwrap();
        let q = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        let dphi: Vec<f64> = x.iter().map(|v| -2.0 * v / q).collect();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let expect = d(i, j) * dphi[k] + d(i, k) * dphi[j] - d(j, k) * dphi[i];
                    assert!((c.chern.get(i, j, k) - expect).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn randers_chern_is_torsion_free_and_metric_compatible() {
    for spec in [randers_varying(), randers_constant()] {
        let mut r = rng(3);
        for _ in 0..100 {
            let x = point(&spec, &mut r, 0.9);
            let y = direction(2, &mut r);
            let c = chern_connection(&spec, &x, &y).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert!((c.chern.get(i, j, k) - c.chern.get(i, k, j)).abs() < 1e-10);
                    }
                }
                let rebuilt: f64 = (0..2)
                    .flat_map(|j| (0..2).map(move |k| (j, k)))
                    .map(|(j, k)| 0.5 * c.chern.get(i, j, k) * y[j] * y[k])
                    .sum();
                assert!((rebuilt - c.spray[i]).abs() <= 1e-9 * (1.0 + c.spray[i].abs()));
            }
            let dg = horizontal_derivative(&FundamentalTensorField, &spec, &x, &y).unwrap();
            assert!(dg.max_abs() < 1e-8, "g_ij|k = {}", dg.max_abs());
            let df = horizontal_derivative(&FSquaredField, &spec, &x, &y).unwrap();
            assert!(df.max_abs() < 1e-8);
        }
    }
}

#[test]
fn riemannian_chern_is_fiber_independent() {
    let spec = MetricSpec::hyperbolic_chart(2);
    let x = [0.2, -0.3];
    let base = chern_coefficients(&spec, &x, &[1.0, 0.0]).unwrap();
    let mut r = rng(4);
    for _ in 0..20 {
        let y = direction(2, &mut r);
        let c = chern_coefficients(&spec, &x, &y).unwrap();
        assert!(max_abs_diff(c.as_slice(), base.as_slice()) < 1e-9);
    }
}

#[test]
fn horizontal_derivative_of_position_function() {
    let spec = randers_varying();
    let u = PositionFunction(Expr::parse("exp(x1) * x2").unwrap());
    let d = horizontal_derivative(&u, &spec, &[0.1, 0.4], &[0.3, -0.8]).unwrap();
    assert!((d.get(&[0]) - 0.1f64.exp() * 0.4).abs() < 1e-14);
    assert!((d.get(&[1]) - 0.1f64.exp()).abs() < 1e-14);
}

#[test]
fn euclidean_geodesics_are_straight_lines() {
    let spec = MetricSpec::euclidean(2);
    let p = integrate_geodesic(&spec, &[-0.5, 0.1], &[0.7, 0.3], 1.0, DEFAULT_STEP).unwrap();
    let last = p.last();
    assert!((last.t - 1.0).abs() < 1e-12);
    assert!(max_abs_diff(&last.x, &[0.2, 0.4]) < 1e-14);
    assert!(max_abs_diff(&last.v, &[0.7, 0.3]) == 0.0);
    assert!(p.drift < 1e-15);
}

#[test]
fn sphere_geodesic_through_origin_follows_great_circle() {
    // along e1 the image of a great circle is x1 = tan(s/2) with s the arclength
    let spec = MetricSpec::sphere_chart(2)
        .with_chart(ChartBox::cube(2, 3.0))
        .unwrap();
    let speed = 2.0 * 0.8;
    let quarter = 0.25 * 2.0 * std::f64::consts::PI / speed;
    let p = integrate_geodesic(&spec, &[0.0, 0.0], &[0.8, 0.0], quarter, DEFAULT_STEP).unwrap();
    for s in p.samples.iter().step_by(97) {
        assert!((s.x[0] - (speed * s.t / 2.0).tan()).abs() < 1e-8);
        assert!(s.x[1].abs() < 1e-15);
    }
    // a quarter period reaches the equator |x| = 1
    assert!((p.last().x[0] - 1.0).abs() < 1e-4);
}

#[test]
fn randers_speed_is_conserved() {
    let spec = randers_varying();
    let y0 = [0.4, 0.3];
    let x0 = [-0.3, -0.2];
    let f0 = spec.f_value(&x0, &y0);
    let p = integrate_geodesic(&spec, &x0, &y0, 1.0, DEFAULT_STEP).unwrap();
    assert!(p.drift < 1e-6 * f0, "drift {}", p.drift);
    assert_eq!(p.rows(&spec).len(), p.samples.len());
}

#[test]
fn randers_geodesics_are_not_reversible() {
    let run = |spec: &MetricSpec| {
        let x0 = [-0.2, 0.1];
        let p = integrate_geodesic(spec, &x0, &[0.5, 0.4], 0.8, DEFAULT_STEP).unwrap();
        let end = p.last();
        let back: Vec<f64> = end.v.iter().map(|v| -v).collect();
        let q = integrate_geodesic(spec, &end.x, &back, 0.8, DEFAULT_STEP).unwrap();
        max_abs_diff(&q.last().x, &x0)
    };
    let riemannian = MetricSpec::sphere_chart(2);
    assert!(run(&riemannian) < 1e-10);
    assert!(run(&randers_varying()) > 1e-3);
}

#[test]
fn euclidean_transport_is_trivial() {
    let spec = MetricSpec::euclidean(2);
    let p = integrate_geodesic(&spec, &[0.0, 0.0], &[0.5, 0.5], 1.0, 1e-2).unwrap();
    let vs = parallel_transport(&spec, &p, &[0.3, -1.0], &TransportReference::PathVelocity).unwrap();
    assert_eq!(vs.len(), p.samples.len());
    assert!(vs.iter().all(|v| v == &vec![0.3, -1.0]));
}

#[test]
fn transport_preserves_reference_norm_along_geodesics() {
    let spec = randers_varying();
    let p = integrate_geodesic(&spec, &[-0.4, -0.3], &[0.6, 0.5], 1.0, DEFAULT_STEP).unwrap();
    let vs = parallel_transport(&spec, &p, &[0.2, -0.7], &TransportReference::PathVelocity).unwrap();
    let norm = |i: usize| {
        let s = &p.samples[i];
        finsler_core::metric::fundamental_tensor(&spec, &s.x, &s.v)
            .unwrap()
            .inner(&vs[i], &vs[i])
    };
    let n0 = norm(0);
    let drift = (0..vs.len()).map(|i| (norm(i) - n0).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-6 * n0, "drift {drift}");
}

#[test]
fn sphere_holonomy_around_small_square_matches_curvature() {
    let spec = MetricSpec::sphere_chart(2);
    let eps = 1e-2;
    let h = eps / 2.0;
    let corners = [[-h, -h], [h, -h], [h, h], [-h, h], [-h, -h]];
    let mut v = vec![1.0, 0.0];
    for w in corners.windows(2) {
        let (a, b) = (w[0], w[1]);
        let edge = [b[0] - a[0], b[1] - a[1]];
        let curve = |t: f64| (vec![a[0] + t * edge[0], a[1] + t * edge[1]], edge.to_vec());
        v = transport_along_curve(&spec, curve, 0.0, 1.0, 50, &v, &TransportReference::PathVelocity)
            .unwrap();
    }
    let angle = v[1].atan2(v[0]);
    // K = 1 and the enclosed area is ∫ 4/(1+|x|²)² ≈ 4ε²
    let expected = 4.0 * eps * eps;
    assert!((angle - expected).abs() < 1e-2 * expected, "angle {angle} vs {expected}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spray_is_two_homogeneous(x1 in -0.9f64..0.9, x2 in -0.9f64..0.9,
                                y1 in -1.0f64..1.0, y2 in -1.0f64..1.0, lam in 0.1f64..5.0) {
        prop_assume!(y1.abs() + y2.abs() > 1e-3);
        let spec = randers_varying();
        let g = spray_coeffs(&spec, &[x1, x2], &[y1, y2]).unwrap();
        let gl = spray_coeffs(&spec, &[x1, x2], &[lam * y1, lam * y2]).unwrap();
        for i in 0..2 {
            prop_assert!((gl[i] - lam * lam * g[i]).abs() <= 1e-10 * (1.0 + gl[i].abs()));
        }
    }

    #[test]
    fn euler_identity_for_nonlinear_connection(x1 in -0.9f64..0.9, x2 in -0.9f64..0.9,
                                                y1 in -1.0f64..1.0, y2 in -1.0f64..1.0) {
        prop_assume!(y1.abs() + y2.abs() > 1e-3);
        let spec = randers_varying();
        let (x, y) = ([x1, x2], [y1, y2]);
        let g = spray_coeffs(&spec, &x, &y).unwrap();
        let n = nonlinear_connection(&spec, &x, &y).unwrap();
        for i in 0..2 {
            let lhs = n[(i, 0)] * y1 + n[(i, 1)] * y2;
            prop_assert!((lhs - 2.0 * g[i]).abs() <= 1e-9 * (1.0 + g[i].abs()));
        }
    }
}
