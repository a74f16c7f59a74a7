//! Nonlinear gradient, Hessian and Laplacians of scalar functions, the
//! exponentially harmonic operators, the exponential energy, and the
//! Bochner and composition identities.

use nalgebra::DMatrix;

use crate::connection::LocalGeometry;
use crate::curvature::{distortion_gradient, weighted_ricci, Weight};
use crate::error::{FinslerError, Result};
use crate::grid::ScalarField;
use crate::jet::{Jet, JetSpace};
use crate::metric::{legendre_dual, legendre_dual_jet, MetricSpec};
use crate::tensor::Tensor3;

/// Default gate: `|Δ̂u| ≤ GATE_REL · (1 + e(u))`.
pub const GATE_REL: f64 = 1e-6;

/// Size of the covector perturbation that defines a reference at `du = 0`.
pub const REFERENCE_EPS: f64 = 1e-12;

/// Coordinate derivatives of `u` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldJet {
    pub x: Vec<f64>,
    pub u: f64,
    pub du: Vec<f64>,
    pub d2u: DMatrix<f64>,
    pub d3u: Option<Tensor3>,
}

impl FieldJet {
    pub fn new(x: Vec<f64>, u: f64, du: Vec<f64>, d2u: DMatrix<f64>) -> Self {
        Self {
            x,
            u,
            du,
            d2u,
            d3u: None,
        }
    }

    pub fn with_d3u(mut self, d3u: Tensor3) -> Self {
        self.d3u = Some(d3u);
        self
    }

    /// Derivatives read off a jet of `u` in the `n` spatial variables.
    pub fn from_jet(x: &[f64], u: &Jet) -> Self {
        let n = x.len();
        let du = (0..n).map(|i| u.partial(&[i])).collect();
        let d2u = DMatrix::from_fn(n, n, |i, j| u.partial(&[i, j]));
        let d3u = (u.order() >= 3).then(|| Tensor3::from_fn(n, |i, j, k| u.partial(&[i, j, k])));
        Self {
            x: x.to_vec(),
            u: u.value(),
            du,
            d2u,
            d3u,
        }
    }

    /// Evaluate `f` on variable jets of the given order seeded at `x`.
    pub fn from_fn(x: &[f64], order: usize, f: impl Fn(&[Jet]) -> Jet) -> Self {
        let xs = Jet::seed(x, order);
        Self::from_jet(x, &f(&xs))
    }

    pub fn from_expr(x: &[f64], expr: &crate::expr::Expr) -> Self {
        Self::from_fn(x, 3, |xs| expr.eval(xs, &xs[0]))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_critical(&self) -> bool {
        self.du.iter().all(|v| *v == 0.0)
    }

    /// Largest asymmetry of `d2u` and `d3u`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.dim();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                r = r.max((self.d2u[(i, j)] - self.d2u[(j, i)]).abs());
                if let Some(t) = &self.d3u {
                    for k in 0..n {
                        let v = t.get(i, j, k);
                        r = r.max((v - t.get(j, i, k)).abs()).max((v - t.get(i, k, j)).abs());
                    }
                }
            }
        }
        r
    }

    /// `∂_i u` as order-2 jets in the spatial variables (needs `d3u`).
    fn gradient_jets(&self) -> Result<(Vec<Jet>, Vec<Jet>)> {
        let d3 = self.d3u.as_ref().ok_or_else(|| {
            FinslerError::DomainError("third derivatives are required here".into())
        })?;
        let n = self.dim();
        let space = JetSpace::get(n, 2);
        let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, self.x[i], i)).collect();
        let dx: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, 0.0, i)).collect();
        let xi = (0..n)
            .map(|i| {
                let mut acc = Jet::constant_in(&space, self.du[i]);
                for j in 0..n {
                    acc = &acc + &dx[j].scale(self.d2u[(i, j)]);
                    for k in 0..n {
                        acc = &acc + &(&dx[j] * &dx[k]).scale(0.5 * d3.get(i, j, k));
                    }
                }
                acc
            })
            .collect();
        Ok((xs, xi))
    }
}

/// Reference vector of a Finsler Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    GradientOfU,
    Given(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorResult {
    pub grad: Vec<f64>,
    /// `e(u) = F*²(Du)`.
    pub e: f64,
    pub hess: DMatrix<f64>,
    pub lap: f64,
    /// `Δ̂u = Δu + (Du)²(∇²u)`.
    pub exp_lap: f64,
    /// `𝒱(u) = exp(e/2)`.
    pub density: f64,
    /// `Δ̃_μ u = 𝒱(u) Δ̂u`.
    pub tilde_lap: f64,
}

/// `(∇u, e(u))`.
pub fn nonlinear_gradient(fj: &FieldJet, spec: &MetricSpec) -> Result<(Vec<f64>, f64)> {
    let d = legendre_dual(spec, &fj.x, &fj.du)?;
    Ok((d.gradient.clone(), d.dual_norm_sq()))
}

/// Connection data at reference `v`: `g^{-1}(v)`, Chern `Γ(v)` and `δτ(v)`.
struct ReferenceData {
    g_inv: DMatrix<f64>,
    chern: Tensor3,
    dtau: Vec<f64>,
}

fn reference_data(spec: &MetricSpec, x: &[f64], v: &[f64]) -> Result<ReferenceData> {
    let geo = LocalGeometry::new(spec, x, v, 3)?;
    Ok(ReferenceData {
        g_inv: geo.g_inv_values(),
        chern: geo.chern.clone(),
        dtau: distortion_gradient(spec, &geo),
    })
}

/// `(∇²f)_ij = f_ij − Γ^k_ij f_k`.
fn covariant_hessian(d1: &[f64], d2: &DMatrix<f64>, chern: &Tensor3) -> DMatrix<f64> {
    let n = d1.len();
    DMatrix::from_fn(n, n, |i, j| {
        d2[(i, j)] - (0..n).map(|k| chern.get(k, i, j) * d1[k]).sum::<f64>()
    })
}

/// `tr_{g(V)} ∇²f − Df(∇^V τ)`.
fn weighted_trace(d1: &[f64], hess: &DMatrix<f64>, r: &ReferenceData) -> f64 {
    let n = d1.len();
    let mut acc = (&r.g_inv * hess).trace();
    for i in 0..n {
        for j in 0..n {
            acc -= d1[i] * r.g_inv[(i, j)] * r.dtau[j];
        }
    }
    acc
}

fn quad(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)] * v[i] * v[j])
        .sum()
}

pub fn finsler_hessian(fj: &FieldJet, spec: &MetricSpec) -> Result<DMatrix<f64>> {
    if fj.is_critical() {
        return Err(FinslerError::ZeroGradientReference);
    }
    let (grad, _) = nonlinear_gradient(fj, spec)?;
    let chern = LocalGeometry::new(spec, &fj.x, &grad, 3)?.chern;
    Ok(covariant_hessian(&fj.du, &fj.d2u, &chern))
}

/// `Δ^V u = tr_{g(V)}(∇^{V,2}u) − Du(∇^V τ)`.
pub fn finsler_laplacian(fj: &FieldJet, spec: &MetricSpec, reference: &Reference) -> Result<f64> {
    let v = match reference {
        Reference::GradientOfU => {
            if fj.is_critical() {
                return Err(FinslerError::ZeroGradientReference);
            }
            nonlinear_gradient(fj, spec)?.0
        }
        Reference::Given(v) => {
            if v.iter().all(|c| *c == 0.0) {
                return Err(FinslerError::ZeroGradientReference);
            }
            v.clone()
        }
    };
    let r = reference_data(spec, &fj.x, &v)?;
    let hess = covariant_hessian(&fj.du, &fj.d2u, &r.chern);
    Ok(weighted_trace(&fj.du, &hess, &r))
}

/// Reference used at a critical point: the dual of `ε·dx¹`.
fn critical_reference(spec: &MetricSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut xi = vec![0.0; spec.dim()];
    xi[0] = REFERENCE_EPS;
    let g = legendre_dual(spec, x, &xi)?.gradient;
    let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(g.iter().map(|c| c / norm).collect())
}

pub fn exp_harmonic_operator(fj: &FieldJet, spec: &MetricSpec) -> Result<OperatorResult> {
    let (grad, e) = nonlinear_gradient(fj, spec)?;
    let v = if fj.is_critical() {
        critical_reference(spec, &fj.x)?
    } else {
        grad.clone()
    };
    let r = reference_data(spec, &fj.x, &v)?;
    let hess = covariant_hessian(&fj.du, &fj.d2u, &r.chern);
    let lap = weighted_trace(&fj.du, &hess, &r);
    let exp_lap = lap + quad(&hess, &grad);
    let density = (0.5 * e).exp();
    Ok(OperatorResult {
        grad,
        e,
        hess,
        lap,
        exp_lap,
        density,
        tilde_lap: density * exp_lap,
    })
}

/// `Δ̃_μ u` in divergence form, `σ⁻¹ ∂_i(σ e^{e/2} ∇u^i)`, through jets of `∇u`.
pub fn divergence_form(fj: &FieldJet, spec: &MetricSpec) -> Result<f64> {
    let n = fj.dim();
    let space = JetSpace::get(n, 1);
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, fj.x[i], i)).collect();
    let xi: Vec<Jet> = (0..n)
        .map(|i| {
            let mut acc = Jet::constant_in(&space, fj.du[i]);
            for j in 0..n {
                acc = &acc + &Jet::variable_in(&space, 0.0, j).scale(fj.d2u[(i, j)]);
            }
            acc
        })
        .collect();
    let grad = legendre_dual_jet(spec, &xs, &xi)?;
    let e = (0..n)
        .map(|i| &xi[i] * &grad[i])
        .reduce(|a, b| &a + &b)
        .expect("n >= 1");
    let log_sigma = spec.measure().log_density(&xs, &xs[0]);
    let weight = (&log_sigma + &e.scale(0.5)).exp();
    let div: f64 = (0..n).map(|i| (&weight * &grad[i]).partial(&[i])).sum();
    Ok(div / log_sigma.value().exp())
}

/// Trapezoid quadrature of `exp(F*²(Du)/2) σ` with central-difference `Du`.
pub fn exp_energy(field: &ScalarField, spec: &MetricSpec) -> Result<f64> {
    let d = &field.domain;
    let cell: f64 = d.spacing().iter().product();
    let mut total = 0.0;
    for k in 0..d.len() {
        let (i, j) = d.coords(k);
        let mut w = cell;
        if i == 0 || i + 1 == d.nx() {
            w *= 0.5;
        }
        if d.dim() == 2 && (j == 0 || j + 1 == d.ny()) {
            w *= 0.5;
        }
        let x = d.point(k);
        let e = legendre_dual(spec, &x, &field.nodal_gradient(k))?.dual_norm_sq();
        total += w * (0.5 * e).exp() * spec.density(&x);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstVariation {
    /// `(𝔼_h(u + t v) − 𝔼_h(u − t v)) / 2t`.
    pub numeric: f64,
    /// `Σ_T w_T 𝒱(u) Dv(∇u)`, the exact derivative of `𝔼_h`.
    pub analytic: f64,
    /// `analytic + ∫ Δ̃_μu · v dμ` with `Δ̃_μu` from finite-difference jets.
    pub weak_residual: f64,
}

/// First variation of the discrete exponential energy in direction `v`.
///
/// `v` must vanish on the two outermost node layers.
pub fn first_variation(
    u: &ScalarField,
    v: &ScalarField,
    spec: &MetricSpec,
    t_step: f64,
) -> Result<FirstVariation> {
    let d = &u.domain;
    if v.domain != *d {
        return Err(FinslerError::InvalidGrid("u and v live on different grids".into()));
    }
    if let Some(node) = (0..d.len()).find(|&k| d.depth(k) < 2 && v.values[k] != 0.0) {
        return Err(FinslerError::SupportViolation { node });
    }
    let shifted = |s: f64| -> ScalarField {
        let mut f = u.clone();
        for (a, b) in f.values.iter_mut().zip(&v.values) {
            *a += s * b;
        }
        f
    };
    let ep = crate::solver::discrete_energy(&shifted(t_step), spec)?;
    let em = crate::solver::discrete_energy(&shifted(-t_step), spec)?;
    let numeric = (ep - em) / (2.0 * t_step);
    let (_, grad) = crate::solver::discrete_energy_and_gradient(u, spec)?;
    let analytic: f64 = grad.iter().zip(&v.values).map(|(g, w)| g * w).sum();
    let cell: f64 = d.spacing().iter().product();
    let mut weak = 0.0;
    for k in 0..d.len() {
        if v.values[k] == 0.0 {
            continue;
        }
        let x = d.point(k);
        let fj = FieldJet::new(x.clone(), u.values[k], u.nodal_gradient(k), hessian_matrix(u.nodal_hessian(k)));
        let op = exp_harmonic_operator(&fj, spec)?;
        weak += cell * op.tilde_lap * v.values[k] * spec.density(&x);
    }
    Ok(FirstVariation {
        numeric,
        analytic,
        weak_residual: analytic + weak,
    })
}

fn hessian_matrix(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Terms of the Bochner-type identity at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BochnerTerms {
    /// `Δ̂^{∇u} e = Δ^{∇u} e + (Du)²(∇^{∇u,2} e)`.
    pub lhs: f64,
    pub ric_inf: f64,
    pub hess_hs2: f64,
    /// `F*²(De)`.
    pub de_dual2: f64,
    /// `lhs − [2 Ric^∞(∇u) + 2‖∇²u‖²_{HS(∇u)} − ½ F*²(De)]`.
    pub residual: f64,
}

fn gate_check(op: &OperatorResult, gate: Option<f64>) -> Result<()> {
    let tol = gate.unwrap_or(GATE_REL * (1.0 + op.e));
    if op.exp_lap.abs() > tol {
        return Err(FinslerError::NotExpHarmonicAt {
            residual: op.exp_lap,
            gate: tol,
        });
    }
    Ok(())
}

/// Residual of the Bochner-type identity; `gate` overrides the default
/// absolute tolerance on `|Δ̂u|`.
pub fn bochner_residual(fj: &FieldJet, spec: &MetricSpec, gate: Option<f64>) -> Result<BochnerTerms> {
    if fj.is_critical() {
        return Err(FinslerError::ZeroGradientReference);
    }
    let n = fj.dim();
    let op = exp_harmonic_operator(fj, spec)?;
    gate_check(&op, gate)?;
    let (xs, xi) = fj.gradient_jets()?;
    let grad = legendre_dual_jet(spec, &xs, &xi)?;
    let e = (0..n)
        .map(|i| &xi[i] * &grad[i])
        .reduce(|a, b| &a + &b)
        .expect("n >= 1");
    let de: Vec<f64> = (0..n).map(|i| e.partial(&[i])).collect();
    let d2e = DMatrix::from_fn(n, n, |i, j| e.partial(&[i, j]));
    let r = reference_data(spec, &fj.x, &op.grad)?;
    let hess_e = covariant_hessian(&de, &d2e, &r.chern);
    let lhs = weighted_trace(&de, &hess_e, &r) + quad(&hess_e, &op.grad);
    let ric_inf = weighted_ricci(spec, &fj.x, &op.grad, Weight::Infinite)?
        .value()
        .expect("k = ∞ is always finite");
    let gi = &r.g_inv;
    let hess_hs2 = (gi * &op.hess * gi * op.hess.transpose()).trace();
    let de_dual2 = legendre_dual(spec, &fj.x, &de)?.dual_norm_sq();
    let residual = lhs - (2.0 * ric_inf + 2.0 * hess_hs2 - 0.5 * de_dual2);
    Ok(BochnerTerms {
        lhs,
        ric_inf,
        hess_hs2,
        de_dual2,
        residual,
    })
}

/// `Δ̂(φ∘u) − φ''(u)(e + e²)`, with reference vector and pairing taken from `u`.
///
/// `phi` returns `(φ'(s), φ''(s))`.
pub fn composition_identity(
    fj: &FieldJet,
    phi: impl Fn(f64) -> (f64, f64),
    spec: &MetricSpec,
    gate: Option<f64>,
) -> Result<f64> {
    let op = exp_harmonic_operator(fj, spec)?;
    gate_check(&op, gate)?;
    if fj.is_critical() {
        return Ok(0.0);
    }
    let n = fj.dim();
    let (p1, p2) = phi(fj.u);
    let dw: Vec<f64> = fj.du.iter().map(|c| p1 * c).collect();
    let d2w = DMatrix::from_fn(n, n, |i, j| p1 * fj.d2u[(i, j)] + p2 * fj.du[i] * fj.du[j]);
    let r = reference_data(spec, &fj.x, &op.grad)?;
    let hess_w = covariant_hessian(&dw, &d2w, &r.chern);
    let lhs = weighted_trace(&dw, &hess_w, &r) + quad(&hess_w, &op.grad);
    Ok(lhs - p2 * (op.e + op.e * op.e))
}

/// Radial exponentially harmonic function on flat `ℝⁿ`: `u'(r) = v` with
/// `v·exp(v²/2) = c / r^{n−1}`, normalized by `u = 0` on `|x − center| = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialExpHarmonic {
    pub center: Vec<f64>,
    pub c: f64,
}

impl RadialExpHarmonic {
    fn slope<S: crate::jet::Scalar>(&self, r: &S) -> S {
        let n = self.center.len() as i32;
        let rhs = r.powi(1 - n) * r.lift(self.c);
        let mut v = r.lift(0.0);
        // Newton on v·exp(v²/2) = rhs; monotone and convex for v ≥ 0
        for _ in 0..60 {
            let ev = (v.clone() * v.clone() * v.lift(0.5)).exp();
            let f = v.clone() * ev.clone() - rhs.clone();
            let df = (v.lift(1.0) + v.clone() * v.clone()) * ev;
            v = v - f / df;
        }
        v
    }

    /// `u(x)` with the radial integral done by composite Simpson.
    pub fn value(&self, x: &[f64]) -> f64 {
        let r = self.radius(x);
        let m = 400;
        let h = (r - 1.0) / m as f64;
        let mut acc = self.slope(&1.0) + self.slope(&r);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.slope(&(1.0 + k as f64 * h));
        }
        acc * h / 3.0
    }

    fn radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Derivatives through third order from jets of `∇u = v(r)(x − c)/r`.
    pub fn field_jet(&self, x: &[f64]) -> FieldJet {
        let n = x.len();
        let xs = Jet::seed(x, 3);
        let d: Vec<Jet> = xs.iter().zip(&self.center).map(|(a, c)| a.add_scalar(-c)).collect();
        let r = d
            .iter()
            .map(|t| t * t)
            .reduce(|a, b| &a + &b)
            .expect("n >= 1")
            .sqrt();
        let v = self.slope(&r);
        let grad: Vec<Jet> = d.iter().map(|t| &(&v * t) / &r).collect();
        let du = grad.iter().map(Jet::value).collect();
        let d2u = DMatrix::from_fn(n, n, |i, j| grad[i].partial(&[j]));
        let d3u = Tensor3::from_fn(n, |i, j, k| grad[i].partial(&[j, k]));
        FieldJet::new(x.to_vec(), self.value(x), du, d2u).with_d3u(d3u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn euclidean_gradient_is_self_dual() {
        let s = MetricSpec::euclidean(2);
        let fj = FieldJet::new(vec![0.0, 0.0], 0.0, vec![1.0, 2.0], DMatrix::zeros(2, 2));
        let (g, e) = nonlinear_gradient(&fj, &s).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] - 2.0).abs() < 1e-15);
        assert!((e - 5.0).abs() < 1e-14);
        let zero = FieldJet::new(vec![0.0, 0.0], 0.0, vec![0.0, 0.0], DMatrix::zeros(2, 2));
        assert_eq!(nonlinear_gradient(&zero, &s).unwrap(), (vec![0.0, 0.0], 0.0));
        assert!(matches!(finsler_hessian(&zero, &s), Err(FinslerError::ZeroGradientReference)));
    }

    #[test]
    fn harmonic_saddle_is_not_exp_harmonic() {
        let s = MetricSpec::euclidean(2);
        let fj = FieldJet::from_expr(&[0.5, 0.25], &Expr::parse("x1^2 - x2^2").unwrap());
        let op = exp_harmonic_operator(&fj, &s).unwrap();
        assert!(op.lap.abs() < 1e-14);
        // (Du)²(∇²u) = 2·(2x)² − 2·(2y)²
        let expect = 8.0 * (0.25 - 0.0625);
        assert!((op.exp_lap - expect).abs() < 1e-13);
    }

    #[test]
    fn radial_field_solves_the_ode() {
        let f = RadialExpHarmonic {
            center: vec![-2.0, -2.0],
            c: 0.7,
        };
        let r: f64 = 2.5;
        let v = f.slope(&r);
        assert!((v * (0.5 * v * v).exp() - 0.7 / r).abs() < 1e-15);
        let fj = f.field_jet(&[0.3, 0.1]);
        assert!(fj.symmetry_residual() < 1e-14);
    }
}
