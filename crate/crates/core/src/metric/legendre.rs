//! Legendre transform between covectors and vectors.
//!
//! For `ξ ≠ 0` the gradient `∇ = ξ♯` is the unique minimiser of the strictly
//! convex fiber function `Φ(y) = ½F²(x, y) − ξ(y)`, i.e. the solution of
//! `g_{(x,y)}(y, ·) = ξ`. Newton's method on `Φ` takes the form
//! `y ← g(x, y)⁻¹ ξ`, damped by step halving until `Φ` decreases.

use nalgebra::{DMatrix, DVector};

use super::tensor::{fiber_jet, full_jet, symmetric_inverse};
use super::MetricSpec;
use crate::error::{FinslerError, Result};
use crate::jet::{solve_jet_system, Jet};

#[derive(Clone, Debug, PartialEq)]
pub struct LegendreDual {
    pub gradient: Vec<f64>,
    pub dual_norm: f64,
}

impl LegendreDual {
    pub fn dual_norm_sq(&self) -> f64 {
        self.dual_norm * self.dual_norm
    }
}

const MAX_NEWTON: usize = 60;

fn phi(spec: &MetricSpec, x: &[f64], xi: &[f64], y: &[f64]) -> f64 {
    let f2: f64 = spec.f_squared(x, y);
    0.5 * f2 - xi.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
}

struct FiberState {
    residual: DVector<f64>,
    g: DMatrix<f64>,
}

fn fiber_state(spec: &MetricSpec, x: &[f64], xi: &[f64], y: &[f64]) -> FiberState {
    let n = spec.dim();
    let jet = fiber_jet(spec, x, y, 2);
    let residual = DVector::from_fn(n, |i, _| 0.5 * jet.partial(&[i]) - xi[i]);
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * jet.partial(&[i, j]));
    FiberState { residual, g }
}

fn newton(spec: &MetricSpec, x: &[f64], xi: &[f64], start: Vec<f64>) -> Option<Vec<f64>> {
    let scale = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut y = start;
    for _ in 0..MAX_NEWTON {
        if y.iter().all(|v| *v == 0.0) {
            return None;
        }
        let st = fiber_state(spec, x, xi, &y);
        if st.residual.norm() <= 1e-14 * scale {
            return Some(polish(spec, x, xi, y, st));
        }
        let chol = st.g.clone().cholesky()?;
        let step = chol.solve(&(-&st.residual));
        let phi0 = phi(spec, x, xi, &y);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if trial.iter().any(|v| *v != 0.0) {
                let p = phi(spec, x, xi, &trial);
                // φ is flat to roundoff near the root; the residual decides there
                let closer = || fiber_state(spec, x, xi, &trial).residual.norm() < st.residual.norm();
                if p.is_finite() && (p <= phi0 || closer()) {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(next) => {
                let moved = next
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                y = next;
                if moved == 0.0 {
                    let st = fiber_state(spec, x, xi, &y);
                    return (st.residual.norm() <= 1e-11 * scale).then_some(y);
                }
            }
            None => {
                let st = fiber_state(spec, x, xi, &y);
                return (st.residual.norm() <= 1e-11 * scale).then_some(y);
            }
        }
    }
    let st = fiber_state(spec, x, xi, &y);
    (st.residual.norm() <= 1e-11 * scale).then_some(y)
}

/// Plain Newton steps while they still shrink the residual; removes the
/// last few ulps of error that the energy gradient would otherwise amplify.
fn polish(spec: &MetricSpec, x: &[f64], xi: &[f64], mut y: Vec<f64>, mut st: FiberState) -> Vec<f64> {
    for _ in 0..3 {
        let Some(chol) = st.g.clone().cholesky() else { break };
        let step = chol.solve(&(-&st.residual));
        let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        let next = fiber_state(spec, x, xi, &trial);
        if next.residual.norm() >= st.residual.norm() {
            break;
        }
        y = trial;
        st = next;
    }
    y
}

fn sphere_samples(n: usize, per_angle: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let angles = n - 1;
    let total = per_angle.pow(angles as u32);
    (0..total)
        .map(|mut idx| {
            let mut theta = Vec::with_capacity(angles);
            for a in 0..angles {
                let k = idx % per_angle;
                idx /= per_angle;
                let t = if a + 1 == angles {
                    2.0 * std::f64::consts::PI * k as f64 / per_angle as f64
                } else {
                    std::f64::consts::PI * (k as f64 + 0.5) / per_angle as f64
                };
                theta.push(t);
            }
            crate::metric::misalignment::hyperspherical(&theta)
        })
        .collect()
}

/// Brute-force `sup { ξ(y) : F(x, y) = 1 }` and its maximiser.
fn brute_force(spec: &MetricSpec, x: &[f64], xi: &[f64]) -> (f64, Vec<f64>) {
    let per = match spec.dim() {
        2 => 8192,
        3 => 128,
        _ => 24,
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; spec.dim()]);
    for y in sphere_samples(spec.dim(), per) {
        let f: f64 = spec.f_value(x, &y);
        let unit: Vec<f64> = y.iter().map(|v| v / f).collect();
        let val: f64 = xi.iter().zip(&unit).map(|(a, b)| a * b).sum();
        if val > best.0 {
            best = (val, unit);
        }
    }
    best
}

/// `(ξ♯, F*(ξ))`; the zero covector maps to `(0, 0)`.
pub fn legendre_dual(spec: &MetricSpec, x: &[f64], xi: &[f64]) -> Result<LegendreDual> {
    let n = spec.dim();
    if xi.iter().all(|v| *v == 0.0) {
        return Ok(LegendreDual {
            gradient: vec![0.0; n],
            dual_norm: 0.0,
        });
    }
    if let Some(a) = spec.quadratic_form(x) {
        let inv = symmetric_inverse(&a, x, xi)?;
        let xv = DVector::from_column_slice(xi);
        let grad = &inv * &xv;
        let e = xv.dot(&grad).max(0.0);
        return Ok(LegendreDual {
            gradient: grad.iter().copied().collect(),
            dual_norm: e.sqrt(),
        });
    }
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y0: Vec<f64> = xi.iter().map(|v| v / norm).collect();
    let g0 = fiber_state(spec, x, xi, &y0).g;
    let start = symmetric_inverse(&g0, x, &y0)
        .map(|inv| (inv * DVector::from_column_slice(xi)).iter().copied().collect())
        .unwrap_or(y0);
    let grad = match newton(spec, x, xi, start) {
        Some(g) => g,
        None => {
            let (fstar, unit) = brute_force(spec, x, xi);
            let seed: Vec<f64> = unit.iter().map(|v| v * fstar).collect();
            newton(spec, x, xi, seed).ok_or_else(|| FinslerError::LegendreNoConvergence {
                xi: xi.to_vec(),
            })?
        }
    };
    let e: f64 = xi.iter().zip(&grad).map(|(a, b)| a * b).sum();
    Ok(LegendreDual {
        gradient: grad,
        dual_norm: e.max(0.0).sqrt(),
    })
}

/// Legendre dual together with `g^{ij}(x, ∇)`, the Hessian of `½F*²` at `ξ`.
///
/// At `ξ = 0` the Hessian is taken at the first coordinate direction, which
/// is exact for Riemannian families and a positive definite surrogate otherwise.
pub fn legendre_with_metric(
    spec: &MetricSpec,
    x: &[f64],
    xi: &[f64],
) -> Result<(LegendreDual, DMatrix<f64>)> {
    let dual = legendre_dual(spec, x, xi)?;
    if let Some(a) = spec.quadratic_form(x) {
        let inv = symmetric_inverse(&a, x, xi)?;
        return Ok((dual, inv));
    }
    let reference = if dual.dual_norm > 0.0 {
        dual.gradient.clone()
    } else {
        let mut e = vec![0.0; spec.dim()];
        e[0] = 1.0;
        e
    };
    let jet = fiber_jet(spec, x, &reference, 2);
    let n = spec.dim();
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * jet.partial(&[i, j]));
    let inv = symmetric_inverse(&g, x, &reference)?;
    Ok((dual, inv))
}

/// Legendre dual of a covector field given as jets.
///
/// `x` and `xi` are jets in a common space (typically the spatial offset
/// around a point); the returned `∇` jets are exact up to that space's order.
pub fn legendre_dual_jet(spec: &MetricSpec, x: &[Jet], xi: &[Jet]) -> Result<Vec<Jet>> {
    let n = spec.dim();
    let order = xi[0].order();
    let x0: Vec<f64> = x.iter().map(Jet::value).collect();
    let xi0: Vec<f64> = xi.iter().map(Jet::value).collect();
    if xi0.iter().all(|v| *v == 0.0) {
        return Err(FinslerError::ZeroGradientReference);
    }
    let base = legendre_dual(spec, &x0, &xi0)?;
    let poly = full_jet(spec, &x0, &base.gradient, order + 1);
    let dpoly: Vec<Jet> = (0..n).map(|i| poly.derivative(n + i).scale(0.5)).collect();
    let hpoly: Vec<Vec<Jet>> = dpoly
        .iter()
        .map(|d| (0..n).map(|j| d.derivative(n + j)).collect())
        .collect();
    let dx: Vec<Jet> = x.iter().map(|j| j.add_scalar(-j.value())).collect();
    let mut grad: Vec<Jet> = base
        .gradient
        .iter()
        .map(|&v| xi[0].constant_like(v))
        .collect();
    for _ in 0..order + 2 {
        let args: Vec<Jet> = dx
            .iter()
            .cloned()
            .chain(grad.iter().map(|g| g.add_scalar(-g.value())))
            .collect();
        let residual: Vec<Vec<Jet>> = (0..n)
            .map(|i| vec![&dpoly[i].compose(&args) - &xi[i]])
            .collect();
        let jac: Vec<Vec<Jet>> = hpoly
            .iter()
            .map(|row| row.iter().map(|h| h.compose(&args)).collect())
            .collect();
        let step = solve_jet_system(&jac, &residual).ok_or_else(|| FinslerError::SingularMetric {
            x: x0.clone(),
            y: base.gradient.clone(),
        })?;
        for i in 0..n {
            grad[i] = &grad[i] - &step[i][0];
        }
    }
    Ok(grad)
}
