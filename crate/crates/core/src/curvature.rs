//! Curvature of the spray, distortion and S-curvature, weighted Ricci
//! curvatures and the non-Riemannian quantities `𝒯`, `U` and `divC`.

use nalgebra::DMatrix;

use crate::connection::{
    horizontal_with, integrate_geodesic, parallel_transport, CartanField, LocalGeometry,
    TensorField, TransportReference,
};
use crate::error::{FinslerError, Result};
use crate::jet::{jet_determinant, Jet, JetSpace};
use crate::metric::{eval_metric, fundamental_tensor, legendre_dual, misalignment, MetricSpec};
use crate::operators::{finsler_laplacian, FieldJet, Reference};
use crate::tensor::Tensor3;

/// Step of the five-point stencils taken along geodesics.
pub const GEODESIC_FD_STEP: f64 = 1e-3;

/// `|S| ≤ S_ZERO_TOL · F(y)` counts as `S = 0` for the `k = n` weight.
pub const S_ZERO_TOL: f64 = 1e-10;

/// `R^i_k(x, y)` from the order-4 local geometry.
pub fn riemann_curvature(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    Ok(riemann_from(&LocalGeometry::new(spec, x, y, 4)?))
}

pub(crate) fn riemann_from(geo: &LocalGeometry) -> DMatrix<f64> {
    let n = geo.n;
    let y = &geo.y;
    let g = &geo.spray;
    let nl = geo.nonlinear_values();
    DMatrix::from_fn(n, n, |i, k| {
        let mut r = 2.0 * g[i].partial(&[k]);
        for j in 0..n {
            r -= y[j] * g[i].partial(&[j, n + k]);
            r += 2.0 * g[j].value() * g[i].partial(&[n + j, n + k]);
            r -= nl[(i, j)] * nl[(j, k)];
        }
        r
    })
}

/// `K(y, u) = g_y(R_y(u), u) / (g_y(y,y) g_y(u,u) − g_y(y,u)²)`.
pub fn flag_curvature(spec: &MetricSpec, x: &[f64], y: &[f64], u: &[f64]) -> Result<f64> {
    let geo = LocalGeometry::new(spec, x, y, 4)?;
    let r = riemann_from(&geo);
    let g = geo.g_values();
    let n = geo.n;
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)] * a[i] * b[j])
            .sum()
    };
    let ru: Vec<f64> = (0..n).map(|i| (0..n).map(|k| r[(i, k)] * u[k]).sum()).collect();
    let den = ip(y, y) * ip(u, u) - ip(y, u).powi(2);
    if den.abs() < 1e-300 {
        return Err(FinslerError::DomainError("flag is degenerate".into()));
    }
    Ok(ip(&ru, u) / den)
}

fn check_density(spec: &MetricSpec, x: &[f64]) -> Result<()> {
    let s = spec.density(x);
    if !(s > 0.0) {
        return Err(FinslerError::NonpositiveDensity(s));
    }
    Ok(())
}

/// `τ = ½ log det g − log σ` as a jet of the geometry's derived order.
pub(crate) fn distortion_jet(spec: &MetricSpec, geo: &LocalGeometry) -> Jet {
    let n = geo.n;
    let order = geo.g[0][0].order();
    let space = JetSpace::get(2 * n, order);
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, geo.x[i], i)).collect();
    let half_log_det = jet_determinant(&geo.g).ln().scale(0.5);
    &half_log_det - &spec.measure().log_density(&xs, &xs[0])
}

pub fn distortion(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_density(spec, x)?;
    let frame = fundamental_tensor(spec, x, y)?;
    Ok(0.5 * frame.g.determinant().ln() - spec.measure().log_density(x, &0.0))
}

/// `δ_i τ (x, y)`.
pub(crate) fn distortion_gradient(spec: &MetricSpec, geo: &LocalGeometry) -> Vec<f64> {
    let tau = distortion_jet(spec, geo);
    (0..geo.n).map(|i| geo.delta(&tau, i)).collect()
}

pub fn distortion_horizontal_gradient(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_density(spec, x)?;
    Ok(distortion_gradient(spec, &LocalGeometry::new(spec, x, y, 3)?))
}

/// `S` and `Ṡ`, each evaluated twice.
#[derive(Clone, Debug, PartialEq)]
pub struct SCurvature {
    /// `y^i δ_i τ` from jets.
    pub s: f64,
    /// Derivative of `τ(γ, γ̇)` along the geodesic by five-point differences.
    pub s_geodesic: f64,
    /// Derivative of `S(γ, γ̇)` along the geodesic by five-point differences.
    pub s_dot: f64,
    /// `y^i δ_i S` from jets.
    pub s_dot_jet: f64,
}

fn s_jet(spec: &MetricSpec, geo: &LocalGeometry) -> Jet {
    let tau = distortion_jet(spec, geo);
    let n = geo.n;
    let mut acc: Option<Jet> = None;
    for i in 0..n {
        let d = geo.delta_jet(&tau, i);
        let yi = Jet::variable_in(d.space(), geo.y[i], n + i);
        let t = &yi * &d;
        acc = Some(match acc {
            None => t,
            Some(a) => &a + &t,
        });
    }
    acc.expect("n >= 1")
}

fn s_value_and_dot(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let geo = LocalGeometry::new(spec, x, y, 4)?;
    let s = s_jet(spec, &geo);
    let dot = (0..geo.n).map(|i| geo.y[i] * geo.delta(&s, i)).sum();
    Ok((s.value(), dot))
}

/// Samples `f(γ(t), γ̇(t))` at `t = -2h, -h, h, 2h`.
fn along_geodesic<T>(
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
    f: impl Fn(&[f64], &[f64]) -> Result<T>,
) -> Result<[T; 4]> {
    let h = GEODESIC_FD_STEP;
    let fwd = integrate_geodesic(spec, x, y, 2.0 * h, h)?;
    let bwd = integrate_geodesic(spec, x, y, -2.0 * h, h)?;
    let (f1, f2) = (&fwd.samples[1], &fwd.samples[2]);
    let (b1, b2) = (&bwd.samples[1], &bwd.samples[2]);
    Ok([f(&b2.x, &b2.v)?, f(&b1.x, &b1.v)?, f(&f1.x, &f1.v)?, f(&f2.x, &f2.v)?])
}

fn five_point(v: &[f64; 4], h: f64) -> f64 {
    (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h)
}

pub fn s_curvature(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<SCurvature> {
    check_density(spec, x)?;
    let (s, s_dot_jet) = s_value_and_dot(spec, x, y)?;
    let h = GEODESIC_FD_STEP;
    let taus = along_geodesic(spec, x, y, |p, v| distortion(spec, p, v))?;
    let ss = along_geodesic(spec, x, y, |p, v| s_value_and_dot(spec, p, v).map(|t| t.0))?;
    Ok(SCurvature {
        s,
        s_geodesic: five_point(&taus, h),
        s_dot: five_point(&ss, h),
        s_dot_jet,
    })
}

/// Weight `k` of a weighted Ricci curvature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Finite(f64),
    Infinite,
}

impl std::fmt::Display for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weight::Finite(k) => write!(f, "{k}"),
            Weight::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightedRicci {
    Value(f64),
    NegInfinity,
}

impl WeightedRicci {
    pub fn value(&self) -> Option<f64> {
        match self {
            WeightedRicci::Value(v) => Some(*v),
            WeightedRicci::NegInfinity => None,
        }
    }

    /// Total order with `NegInfinity` below every value.
    pub fn le(&self, other: &WeightedRicci) -> bool {
        match (self, other) {
            (WeightedRicci::NegInfinity, _) => true,
            (_, WeightedRicci::NegInfinity) => false,
            (WeightedRicci::Value(a), WeightedRicci::Value(b)) => a <= b,
        }
    }
}

impl std::fmt::Display for WeightedRicci {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightedRicci::Value(v) => write!(f, "{}", crate::grid::fmt_f64(*v)),
            WeightedRicci::NegInfinity => write!(f, "-inf"),
        }
    }
}

fn check_weight(k: Weight, n: usize) -> Result<()> {
    if let Weight::Finite(v) = k {
        if !(v >= n as f64) {
            return Err(FinslerError::InvalidK { k: v, n });
        }
    }
    Ok(())
}

fn apply_weight(trace: f64, s: f64, s_dot: f64, f: f64, k: Weight, n: usize) -> WeightedRicci {
    match k {
        Weight::Infinite => WeightedRicci::Value(trace + s_dot),
        Weight::Finite(v) if v == n as f64 => {
            if s.abs() <= S_ZERO_TOL * f {
                WeightedRicci::Value(trace + s_dot)
            } else {
                WeightedRicci::NegInfinity
            }
        }
        Weight::Finite(v) => WeightedRicci::Value(trace + s_dot - s * s / (v - n as f64)),
    }
}

/// `Ric^k(y)`; 2-homogeneous in `y`, so pass a unit vector for the normalized value.
pub fn weighted_ricci(spec: &MetricSpec, x: &[f64], y: &[f64], k: Weight) -> Result<WeightedRicci> {
    check_weight(k, spec.dim())?;
    let r = riemann_curvature(spec, x, y)?;
    let s = s_curvature(spec, x, y)?;
    Ok(apply_weight(r.trace(), s.s, s.s_dot, eval_metric(spec, x, y)?, k, spec.dim()))
}

/// `tr_W R_Y(Y) = g^{ij}(W) g_{jm}(Y) R^m_i(Y)`.
pub fn mixed_trace(spec: &MetricSpec, x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    let geo = LocalGeometry::new(spec, x, y, 4)?;
    let r = riemann_from(&geo);
    let gy = geo.g_values();
    Ok(mixed_trace_with(&r, &gy, &fundamental_tensor(spec, x, w)?.g_inv))
}

fn mixed_trace_with(r: &DMatrix<f64>, gy: &DMatrix<f64>, gw_inv: &DMatrix<f64>) -> f64 {
    (gw_inv * gy * r).trace()
}

pub fn mixed_weighted_ricci(
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    k: Weight,
) -> Result<WeightedRicci> {
    check_weight(k, spec.dim())?;
    let trace = mixed_trace(spec, x, y, w)?;
    let s = s_curvature(spec, x, y)?;
    Ok(apply_weight(trace, s.s, s.s_dot, eval_metric(spec, x, y)?, k, spec.dim()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TTensor {
    pub covector: Vec<f64>,
    /// `F*(𝒯)` at `x`.
    pub dual_norm: f64,
}

/// `𝒯_i = δ_iτ(x, Y) − δ_iτ(x, W)`.
pub fn t_tensor(spec: &MetricSpec, x: &[f64], y: &[f64], w: &[f64]) -> Result<TTensor> {
    let a = distortion_horizontal_gradient(spec, x, y)?;
    let b = distortion_horizontal_gradient(spec, x, w)?;
    let covector: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    let dual_norm = legendre_dual(spec, x, &covector)?.dual_norm;
    Ok(TTensor {
        covector,
        dual_norm,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UTensor {
    /// Sum over the transported frame of `D^W_{e_i}E_i − D̂_{e_i}E_i`.
    pub vector: Vec<f64>,
    /// `(Γ^k_jm(x,W) − Γ^k_jm(x,y)) g^{jm}(x,y)`, the same sum in closed form.
    pub closed_form: Vec<f64>,
    /// `F(x, U)`, zero when `U = 0`.
    pub norm: f64,
}

/// Step used for the derivatives of the transported frame and of `g_Y`.
const U_FD_STEP: f64 = 1e-4;
const OSCULATING_FD_STEP: f64 = 1e-3;

/// `g(x,y)`-orthonormal frame by Gram–Schmidt on `start` (coordinate basis when `None`).
pub fn orthonormal_frame(
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
    start: Option<&[Vec<f64>]>,
) -> Result<Vec<Vec<f64>>> {
    let n = spec.dim();
    let pf = fundamental_tensor(spec, x, y)?;
    let basis: Vec<Vec<f64>> = match start {
        Some(s) => s.to_vec(),
        None => (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in basis {
        let mut w = v.clone();
        for e in &out {
            let c = pf.inner(&v, e);
            for (wi, ei) in w.iter_mut().zip(e) {
                *wi -= c * ei;
            }
        }
        let norm = pf.inner(&w, &w).sqrt();
        if !(norm > 1e-12) {
            return Err(FinslerError::DomainError("initial frame is degenerate".into()));
        }
        out.push(w.iter().map(|c| c / norm).collect());
    }
    Ok(out)
}

/// Christoffel symbols of `ĝ(x') = g(x', Y(x'))` at `x`, where `Y` extends `y`
/// with vanishing Chern derivative at `x`: `Y(x') = y − N(x,y)(x' − x)`.
fn osculating_christoffel(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Tensor3> {
    let n = spec.dim();
    let nl = LocalGeometry::new(spec, x, y, 3)?.nonlinear_values();
    let h = OSCULATING_FD_STEP;
    let g_at = |k: usize, s: f64| -> Result<DMatrix<f64>> {
        let mut p = x.to_vec();
        p[k] += s;
        let yy: Vec<f64> = (0..n).map(|m| y[m] - nl[(m, k)] * s).collect();
        Ok(fundamental_tensor(spec, &p, &yy)?.g)
    };
    let central = |k: usize, s: f64| -> Result<DMatrix<f64>> { Ok((g_at(k, s)? - g_at(k, -s)?) / (2.0 * s)) };
    // Richardson: O(h⁴) truncation
    let dg = (0..n)
        .map(|k| Ok((central(k, 0.5 * h)? * 4.0 - central(k, h)?) / 3.0))
        .collect::<Result<Vec<_>>>()?;
    let inv = fundamental_tensor(spec, x, y)?.g_inv;
    Ok(Tensor3::from_fn(n, |i, j, k| {
        0.5 * (0..n)
            .map(|l| inv[(i, l)] * (dg[k][(l, j)] + dg[j][(l, k)] - dg[l][(j, k)]))
            .sum::<f64>()
    }))
}

/// `U(y, W)` with the frame extended by Chern transport (reference `W`) along
/// the geodesics issuing from `x` in the frame directions.
pub fn u_tensor(
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    start: Option<&[Vec<f64>]>,
) -> Result<UTensor> {
    let n = spec.dim();
    let frame = orthonormal_frame(spec, x, y, start)?;
    let gamma_w = LocalGeometry::new(spec, x, w, 3)?.chern;
    let gamma_hat = osculating_christoffel(spec, x, y)?;
    let h = U_FD_STEP;
    let reference = TransportReference::Fixed(w.to_vec());
    let mut vector = vec![0.0; n];
    for e in &frame {
        let mut ends = Vec::with_capacity(2);
        for t in [h, -h] {
            let path = integrate_geodesic(spec, x, e, t, h / 2.0)?;
            let vs = parallel_transport(spec, &path, e, &reference)?;
            ends.push(vs.last().cloned().expect("nonempty transport"));
        }
        for k in 0..n {
            let de = (ends[0][k] - ends[1][k]) / (2.0 * h);
            let mut dw = de;
            let mut dhat = de;
            for j in 0..n {
                for m in 0..n {
                    dw += gamma_w.get(k, j, m) * e[j] * e[m];
                    dhat += gamma_hat.get(k, j, m) * e[j] * e[m];
                }
            }
            vector[k] += dw - dhat;
        }
    }
    let gamma_y = LocalGeometry::new(spec, x, y, 3)?.chern;
    let gy_inv = fundamental_tensor(spec, x, y)?.g_inv;
    let closed_form: Vec<f64> = (0..n)
        .map(|k| {
            (0..n)
                .flat_map(|j| (0..n).map(move |m| (j, m)))
                .map(|(j, m)| (gamma_w.get(k, j, m) - gamma_y.get(k, j, m)) * gy_inv[(j, m)])
                .sum()
        })
        .collect();
    let norm = if vector.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        eval_metric(spec, x, &vector)?
    };
    Ok(UTensor {
        vector,
        closed_form,
        norm,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivCartan {
    /// `divC_jk = F(x,y) · C^i_{jk|i}`.
    pub tensor: DMatrix<f64>,
    /// `‖divC‖_{HS(V)}` with `g(x, V)`.
    pub hs_norm: f64,
}

pub fn div_cartan(spec: &MetricSpec, x: &[f64], y: &[f64], v: &[f64]) -> Result<DivCartan> {
    let n = spec.dim();
    let geo = LocalGeometry::new(spec, x, y, 3)?;
    let comps = CartanField.components(spec, x, y)?;
    let dc = horizontal_with(&geo, &CartanField.slots(), &comps);
    let g_inv = geo.g_inv_values();
    let f = eval_metric(spec, x, y)?;
    // g^{im} is horizontally parallel, so raising commutes with the derivative
    let tensor = DMatrix::from_fn(n, n, |j, k| {
        let mut acc = 0.0;
        for i in 0..n {
            for m in 0..n {
                acc += g_inv[(i, m)] * dc.get(&[m, j, k, i]);
            }
        }
        f * acc
    });
    let hs_norm = hs_norm(&tensor, &fundamental_tensor(spec, x, v)?.g_inv);
    Ok(DivCartan { tensor, hs_norm })
}

/// `(g^{ja} g^{kb} T_jk T_ab)^{1/2}`.
pub fn hs_norm(t: &DMatrix<f64>, g_inv: &DMatrix<f64>) -> f64 {
    (g_inv * t * g_inv * t.transpose()).trace().max(0.0).sqrt()
}

/// `𝔠𝔱_c(r)`.
pub fn comparison_ct(c: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(FinslerError::DomainError(format!("ct needs r > 0, got {r}")));
    }
    if c > 0.0 && c.sqrt() * r >= std::f64::consts::PI {
        return Err(FinslerError::DomainError(format!(
            "ct_{c} undefined at r = {r} ≥ π/√c"
        )));
    }
    let z = c * r * r;
    if z.abs() < 1e-4 {
        // common series of √c·cot(√c r) and √(−c)·coth(√(−c) r)
        return Ok(1.0 / r - c * r / 3.0 - c * c * r * r * r / 45.0 - 2.0 * c.powi(3) * r.powi(5) / 945.0);
    }
    if c > 0.0 {
        let s = c.sqrt();
        Ok(s / (s * r).tan())
    } else {
        let s = (-c).sqrt();
        Ok(s / (s * r).tanh())
    }
}

/// `C(N, α) = N + (α − 1)n − α`.
pub fn comparison_constant(weight: f64, alpha: f64, n: usize) -> f64 {
    weight + (alpha - 1.0) * n as f64 - alpha
}

/// Forward distance from `x0` to `x`.
///
/// Closed form `F(x0, x − x0)` on translation-invariant metrics; geodesic
/// shooting elsewhere.
pub fn forward_distance(spec: &MetricSpec, x0: &[f64], x: &[f64]) -> Result<f64> {
    let d: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if spec.is_translation_invariant() {
        return eval_metric(spec, x0, &d);
    }
    let v = shoot(spec, x0, x)?;
    eval_metric(spec, x0, &v)
}

/// Initial velocity `v` with `exp_{x0}(v) = x`, by Newton on the endpoint map.
fn shoot(spec: &MetricSpec, x0: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim();
    let step = 2e-3;
    let endpoint = |v: &[f64]| -> Result<Vec<f64>> {
        Ok(integrate_geodesic(spec, x0, v, 1.0, step)?.last().x.clone())
    };
    let fail = |msg: &str| FinslerError::NonSmoothDistance(msg.to_string());
    let mut v: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let scale = v.iter().map(|c| c.abs()).fold(0.0, f64::max);
    for _ in 0..40 {
        let p = endpoint(&v).map_err(|_| fail("shooting left the chart"))?;
        let r: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
        if r.iter().map(|c| c.abs()).fold(0.0, f64::max) < 1e-13 * (1.0 + scale) {
            return Ok(v);
        }
        let hfd = 1e-6 * (1.0 + scale);
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut vp = v.clone();
            vp[k] += hfd;
            let mut vm = v.clone();
            vm[k] -= hfd;
            let pp = endpoint(&vp).map_err(|_| fail("shooting left the chart"))?;
            let pm = endpoint(&vm).map_err(|_| fail("shooting left the chart"))?;
            for i in 0..n {
                jac[(i, k)] = (pp[i] - pm[i]) / (2.0 * hfd);
            }
        }
        let dv = jac
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&r))
            .ok_or_else(|| fail("conjugate point: singular endpoint map"))?;
        for i in 0..n {
            v[i] -= dv[i];
        }
    }
    Err(fail("shooting did not converge"))
}

/// Field jet of `r = d(x0, ·)` at `x`.
pub fn distance_jet(spec: &MetricSpec, x0: &[f64], x: &[f64]) -> Result<FieldJet> {
    if x.iter().zip(x0).all(|(a, b)| a == b) {
        return Err(FinslerError::NonSmoothDistance("r is not differentiable at x0".into()));
    }
    if !spec.chart().contains(x) {
        return Err(FinslerError::NonSmoothDistance("sample outside the chart".into()));
    }
    let n = spec.dim();
    if spec.is_translation_invariant() {
        return Ok(FieldJet::from_fn(x, 3, |xs| {
            let d: Vec<Jet> = xs.iter().zip(x0).map(|(a, b)| a.add_scalar(-b)).collect();
            let base: Vec<Jet> = x0.iter().map(|&b| d[0].constant_like(b)).collect();
            spec.f_value(&base, &d)
        }));
    }
    // dr = g_T(T, ·)/F(T) with T the arrival velocity; second derivatives by differences
    let grad_at = |p: &[f64]| -> Result<Vec<f64>> {
        let v = shoot(spec, x0, p)?;
        let path = integrate_geodesic(spec, x0, &v, 1.0, 2e-3)?;
        let end = path.last();
        let pf = fundamental_tensor(spec, &end.x, &end.v)?;
        Ok(pf.lower(&end.v).iter().map(|c| c / pf.f_val).collect())
    };
    let du = grad_at(x)?;
    let h = 1e-4;
    let mut d2u = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut p = x.to_vec();
        p[k] += h;
        let mut m = x.to_vec();
        m[k] -= h;
        let (gp, gm) = (grad_at(&p)?, grad_at(&m)?);
        for i in 0..n {
            d2u[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = (&d2u + d2u.transpose()) * 0.5;
    Ok(FieldJet::new(x.to_vec(), forward_distance(spec, x0, x)?, du, sym))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub x: Vec<f64>,
    pub r: f64,
    pub laplacian: f64,
    pub bound: f64,
    /// `Δ^V r − C(N,α)·𝔠𝔱_{−l}(r)`.
    pub margin: f64,
}

/// Reference vector used for `Δ^V r` in the comparison probe.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeReference {
    GradientOfDistance,
    Given(Vec<f64>),
}

/// Tabulate `Δ^V r` against `C(N,α)·𝔠𝔱_{−l}(r)` with `l = K/C(N,α)`.
///
/// `alpha` defaults to the misalignment at `x0` when `None`.
pub fn laplacian_comparison_probe(
    spec: &MetricSpec,
    x0: &[f64],
    samples: &[Vec<f64>],
    weight: f64,
    curvature_bound: f64,
    alpha: Option<f64>,
    reference: &ProbeReference,
) -> Result<Vec<ComparisonRow>> {
    let n = spec.dim();
    let alpha = match alpha {
        Some(a) => a,
        None => misalignment(spec, x0, 32)?.value,
    };
    let c = comparison_constant(weight, alpha, n);
    let l = curvature_bound / c;
    samples
        .iter()
        .map(|x| {
            let fj = distance_jet(spec, x0, x)?;
            let reference = match reference {
                ProbeReference::GradientOfDistance => Reference::GradientOfU,
                ProbeReference::Given(v) => Reference::Given(v.clone()),
            };
            let laplacian = finsler_laplacian(&fj, spec, &reference)?;
            let bound = c * comparison_ct(-l, fj.u)?;
            Ok(ComparisonRow {
                x: x.clone(),
                r: fj.u,
                laplacian,
                bound,
                margin: laplacian - bound,
            })
        })
        .collect()
}

/// All scalar curvature data at one `(x, Y, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureReport {
    pub x: Vec<f64>,
    /// `Y` normalized to `F(x, Y) = 1`.
    pub y: Vec<f64>,
    /// `W` normalized to `F(x, W) = 1`.
    pub w: Vec<f64>,
    pub riemann: DMatrix<f64>,
    pub ricci: f64,
    pub s_curv: f64,
    pub s_dot: f64,
    pub wric: Vec<(Weight, WeightedRicci)>,
    pub mixed_wric: Vec<(Weight, WeightedRicci)>,
    pub t_tensor: Vec<f64>,
    pub t_dual_norm: f64,
    /// `𝒯(Y,W) + 𝒯(W,Y)`; zero up to roundoff.
    pub t_antisymmetry: f64,
    pub u_vec: Vec<f64>,
    pub u_norm: f64,
    pub div_c_norm: f64,
    pub misalignment: f64,
}

/// `divC` is normed with `V = W`; the misalignment uses `resolution` samples per angle.
pub fn curvature_report(
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    weights: &[Weight],
    resolution: usize,
) -> Result<CurvatureReport> {
    let n = spec.dim();
    let unit = |v: &[f64]| -> Result<Vec<f64>> {
        let f = eval_metric(spec, x, v)?;
        Ok(v.iter().map(|c| c / f).collect())
    };
    let (y, w) = (unit(y)?, unit(w)?);
    for k in weights {
        check_weight(*k, n)?;
    }
    let geo = LocalGeometry::new(spec, x, &y, 4)?;
    let riemann = riemann_from(&geo);
    let ricci = riemann.trace();
    let s = s_curvature(spec, x, &y)?;
    let mixed = mixed_trace_with(&riemann, &geo.g_values(), &fundamental_tensor(spec, x, &w)?.g_inv);
    let wric = weights
        .iter()
        .map(|&k| (k, apply_weight(ricci, s.s, s.s_dot, 1.0, k, n)))
        .collect();
    let mixed_wric = weights
        .iter()
        .map(|&k| (k, apply_weight(mixed, s.s, s.s_dot, 1.0, k, n)))
        .collect();
    let t = t_tensor(spec, x, &y, &w)?;
    let t_rev = t_tensor(spec, x, &w, &y)?;
    let t_antisymmetry = t
        .covector
        .iter()
        .zip(&t_rev.covector)
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max);
    let u = u_tensor(spec, x, &y, &w, None)?;
    let dc = div_cartan(spec, x, &y, &w)?;
    Ok(CurvatureReport {
        x: x.to_vec(),
        y,
        w,
        riemann,
        ricci,
        s_curv: s.s,
        s_dot: s.s_dot,
        wric,
        mixed_wric,
        t_tensor: t.covector,
        t_dual_norm: t.dual_norm,
        t_antisymmetry,
        u_vec: u.vector,
        u_norm: u.norm,
        div_c_norm: dc.hs_norm,
        misalignment: misalignment(spec, x, resolution)?.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ct_values_and_continuity() {
        assert_eq!(comparison_ct(0.0, 2.0).unwrap(), 0.5);
        assert!((comparison_ct(1.0, std::f64::consts::FRAC_PI_4).unwrap() - 1.0).abs() < 1e-15);
        for c in [1e-8, -1e-8] {
            assert!((comparison_ct(c, 1.0).unwrap() - 1.0).abs() < 1e-7);
        }
        assert!(comparison_ct(1.0, 4.0).is_err());
        assert!(comparison_ct(0.0, 0.0).is_err());
        // both sides of the series switch agree
        for c in [-2e-4, 2e-4] {
            let a = comparison_ct(c * 0.999, 1.0).unwrap();
            let b = comparison_ct(c * 1.001, 1.0).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_weight_rejected() {
        let s = MetricSpec::euclidean(2);
        assert!(matches!(
            weighted_ricci(&s, &[0.0, 0.0], &[1.0, 0.0], Weight::Finite(1.5)),
            Err(FinslerError::InvalidK { .. })
        ));
    }

    #[test]
    fn weighted_ricci_order() {
        assert!(WeightedRicci::NegInfinity.le(&WeightedRicci::Value(-1e300)));
        assert!(!WeightedRicci::Value(0.0).le(&WeightedRicci::NegInfinity));
    }
}
