//! Invariant suite run by `finsler validate` on the configured metric.

use finsler_core::curvature::{flag_curvature, mixed_weighted_ricci, s_curvature, t_tensor, Weight, WeightedRicci};
use finsler_core::metric::{eval_metric, fundamental_tensor, legendre_dual, metric_jet, misalignment};
use finsler_core::{MetricSpec, Result, RunConfig};

use crate::points::random_points;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Curvature hypothesis of the gradient estimate not met; a warning.
    Warn,
    Info,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Warn => "warn",
            Status::Info => "info",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub value: f64,
    pub tolerance: f64,
}

fn bounded(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        status: if value <= tolerance { Status::Pass } else { Status::Fail },
        value,
        tolerance,
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter().map(|c| c / n).collect()
}

/// Second fiber derivatives of `F²` from the jet against central differences.
fn jet_fd_gap(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = spec.dim();
    let jet = metric_jet(spec, x, y)?;
    let f2 = |yy: &[f64]| -> Result<f64> { Ok(eval_metric(spec, x, yy)?.powi(2)) };
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let shifted = |si: f64, sj: f64| {
                let mut v = y.to_vec();
                v[i] += si;
                v[j] += sj;
                f2(&v)
            };
            let fd = (shifted(h, h)? - shifted(h, -h)? - shifted(-h, h)? + shifted(-h, -h)?) / (4.0 * h * h);
            let exact = jet.d(&[], &[i, j]);
            worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
        }
    }
    Ok(worst)
}

pub fn run_checks(cfg: &RunConfig, seed: u64) -> Result<Vec<Check>> {
    let spec = &cfg.spec;
    let n = spec.dim();
    let samples = random_points(spec, cfg.validate.samples.max(1), seed);
    let mut homog_f: f64 = 0.0;
    let mut homog_g: f64 = 0.0;
    let mut cartan_annihilation: f64 = 0.0;
    let mut inverse: f64 = 0.0;
    let mut involution: f64 = 0.0;
    let mut cartan_max: f64 = 0.0;
    let mut jet_gap: f64 = 0.0;
    let mut t_antisym: f64 = 0.0;
    let mut k_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut s_max: f64 = 0.0;
    let mut ric_min = WeightedRicci::Value(f64::INFINITY);
    for p in &samples {
        let (x, y, w) = (&p.x, &p.y, &p.w);
        let lam = 2.5;
        let ly: Vec<f64> = y.iter().map(|c| lam * c).collect();
        let f = eval_metric(spec, x, y)?;
        homog_f = homog_f.max((eval_metric(spec, x, &ly)? - lam * f).abs() / (lam * f));
        let frame = fundamental_tensor(spec, x, y)?;
        let scaled = fundamental_tensor(spec, x, &ly)?;
        homog_g = homog_g.max(max_abs((&frame.g - &scaled.g).iter().copied()));
        let prod = &frame.g * &frame.g_inv;
        inverse = inverse.max(max_abs(prod.iter().enumerate().map(|(k, v)| {
            let (i, j) = (k % n, k / n);
            v - if i == j { 1.0 } else { 0.0 }
        })));
        cartan_max = cartan_max.max(max_abs(frame.cartan.as_slice().iter().copied()));
        cartan_annihilation = cartan_annihilation.max(max_abs(frame.cartan.contract_last(y).into_iter().flatten()));

        // forward Legendre map of the dual recovers the covector
        let xi = frame.lower(w);
        let dual = legendre_dual(spec, x, &xi)?;
        let back = fundamental_tensor(spec, x, &dual.gradient)?.lower(&dual.gradient);
        let scale = max_abs(xi.iter().copied()).max(f64::MIN_POSITIVE);
        involution = involution.max(max_abs(back.iter().zip(&xi).map(|(a, b)| a - b)) / scale);

        jet_gap = jet_gap.max(jet_fd_gap(spec, x, y)?);
        let t = t_tensor(spec, x, y, w)?;
        let t_rev = t_tensor(spec, x, w, y)?;
        t_antisym = t_antisym.max(max_abs(t.covector.iter().zip(&t_rev.covector).map(|(a, b)| a + b)));
        s_max = s_max.max(s_curvature(spec, x, &unit(y))?.s.abs());

        if n >= 2 {
            let k = flag_curvature(spec, x, y, w)?;
            k_range = (k_range.0.min(k), k_range.1.max(k));
        }
        let yu: Vec<f64> = y.iter().map(|c| c / f).collect();
        let fw = eval_metric(spec, x, w)?;
        let wu: Vec<f64> = w.iter().map(|c| c / fw).collect();
        let r = mixed_weighted_ricci(spec, x, &yu, &wu, Weight::Infinite)?;
        if r.le(&ric_min) {
            ric_min = r;
        }
    }

    let mut checks = vec![
        bounded("homogeneity_F", homog_f, 1e-12),
        bounded("homogeneity_g", homog_g, 1e-10),
        bounded("g_times_g_inv", inverse, 1e-10),
        bounded("cartan_annihilates_y", cartan_annihilation, 1e-10),
        bounded("legendre_involution", involution, 1e-9),
        bounded("jet_vs_finite_differences", jet_gap, 1e-5),
        bounded("t_antisymmetry", t_antisym, 1e-9),
    ];
    let alpha = misalignment(spec, &samples[0].x, cfg.validate.misalignment_resolution)?.value;
    checks.push(Check {
        name: "misalignment_at_least_one",
        status: if alpha >= 1.0 - 1e-12 { Status::Pass } else { Status::Fail },
        value: alpha,
        tolerance: 1e-12,
    });
    if spec.is_riemannian() {
        checks.push(bounded("riemannian_cartan_zero", cartan_max, 0.0));
        checks.push(bounded("riemannian_misalignment_one", (alpha - 1.0).abs(), 1e-9));
    }
    if n >= 2 {
        match cfg.constant_curvature {
            Some(k0) => {
                let dev = (k_range.0 - k0).abs().max((k_range.1 - k0).abs());
                checks.push(bounded("constant_flag_curvature", dev, 1e-6));
            }
            None => {
                checks.push(Check {
                    name: "flag_curvature_min",
                    status: Status::Info,
                    value: k_range.0,
                    tolerance: 0.0,
                });
                checks.push(Check {
                    name: "flag_curvature_max",
                    status: Status::Info,
                    value: k_range.1,
                    tolerance: 0.0,
                });
            }
        }
    }
    checks.push(Check {
        name: "s_curvature_max_abs",
        status: Status::Info,
        value: s_max,
        tolerance: 0.0,
    });
    let ric_value = ric_min.value().unwrap_or(f64::NEG_INFINITY);
    checks.push(Check {
        name: "mixed_weighted_ricci_min",
        status: if ric_value >= -1e-6 { Status::Pass } else { Status::Warn },
        value: ric_value,
        tolerance: 1e-6,
    });
    Ok(checks)
}
