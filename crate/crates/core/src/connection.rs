//! Spray, nonlinear and Chern connections, horizontal derivatives,
//! geodesics and parallel transport.
//!
//! Index conventions: `G^i = ¼ g^{il}(y^k ∂²F²/∂x^k∂y^l − ∂F²/∂x^l)`,
//! `N^i_j = ∂G^i/∂y^j`, `δ_k = ∂/∂x^k − N^m_k ∂/∂y^m` and
//! `Γ^i_jk = ½ g^{il}(δ_k g_lj + δ_j g_lk − δ_l g_jk)`, stored as
//! `chern.get(i, j, k)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FinslerError, Result};
use crate::expr::Expr;
use crate::jet::{invert_jet_matrix, Jet, JetSpace};
use crate::metric::{fundamental_tensor, MetricSpec, PointFrame};
use crate::tensor::Tensor3;

pub const DEFAULT_STEP: f64 = 1e-3;

fn check_fiber(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| *v == 0.0) {
        return Err(FinslerError::ZeroFiberVector);
    }
    Ok(())
}

/// Jets of the metric quantities at `(x, y)` in the `2n` variables `(x, y)`.
///
/// Built from an order-`m` jet of `F²`; `g`, `g_inv` and `spray` carry order
/// `m − 2`, `nonlinear` order `m − 3`.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f2: Jet,
    pub g: Vec<Vec<Jet>>,
    pub g_inv: Vec<Vec<Jet>>,
    pub spray: Vec<Jet>,
    pub nonlinear: Vec<Vec<Jet>>,
    pub chern: Tensor3,
}

impl LocalGeometry {
    /// `order` is the order of the `F²` jet; at least 3.
    pub fn new(spec: &MetricSpec, x: &[f64], y: &[f64], order: usize) -> Result<Self> {
        check_fiber(y)?;
        assert!(order >= 3, "local geometry needs an order-3 metric jet");
        let n = spec.dim();
        let space = JetSpace::get(2 * n, order);
        let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, x[i], i)).collect();
        let ys: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, y[i], n + i)).collect();
        let f2 = spec.f_squared(&xs, &ys);
        let k = order - 2;

        let g: Vec<Vec<Jet>> = (0..n)
            .map(|i| {
                let fi = f2.derivative(n + i);
                (0..n).map(|j| fi.derivative(n + j).scale(0.5)).collect()
            })
            .collect();
        let gv = DMatrix::from_fn(n, n, |i, j| g[i][j].value());
        if gv.clone().cholesky().is_none() {
            return Err(FinslerError::SingularMetric {
                x: x.to_vec(),
                y: y.to_vec(),
            });
        }
        let g_inv = invert_jet_matrix(&g).ok_or_else(|| FinslerError::SingularMetric {
            x: x.to_vec(),
            y: y.to_vec(),
        })?;

        let kspace = JetSpace::get(2 * n, k);
        let yk: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&kspace, y[i], n + i)).collect();
        // b_l = y^k ∂²F²/∂x^k∂y^l − ∂F²/∂x^l
        let b: Vec<Jet> = (0..n)
            .map(|l| {
                let mut acc = f2.derivative(l).truncate(k).scale(-1.0);
                for (kk, yv) in yk.iter().enumerate() {
                    acc = &acc + &(yv * &f2.derivative(kk).derivative(n + l));
                }
                acc
            })
            .collect();
        let spray: Vec<Jet> = (0..n)
            .map(|i| {
                let mut acc = Jet::constant_in(&kspace, 0.0);
                for l in 0..n {
                    acc = &acc + &(&g_inv[i][l] * &b[l]);
                }
                acc.scale(0.25)
            })
            .collect();
        let nonlinear: Vec<Vec<Jet>> = spray
            .iter()
            .map(|gi| (0..n).map(|j| gi.derivative(n + j)).collect())
            .collect();

        let mut geo = Self {
            n,
            x: x.to_vec(),
            y: y.to_vec(),
            f2,
            g,
            g_inv,
            spray,
            nonlinear,
            chern: Tensor3::zeros(n),
        };
        let dg: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|kk| {
                (0..n)
                    .map(|l| (0..n).map(|j| geo.delta(&geo.g[l][j], kk)).collect())
                    .collect()
            })
            .collect();
        let chern = Tensor3::from_fn(n, |i, j, kk| {
            0.5 * (0..n)
                .map(|l| {
                    geo.g_inv[i][l].value() * (dg[kk][l][j] + dg[j][l][kk] - dg[l][j][kk])
                })
                .sum::<f64>()
        });
        geo.chern = chern;
        Ok(geo)
    }

    /// `δ_k f` at the base point for a jet `f` in the `(x, y)` variables.
    pub fn delta(&self, f: &Jet, k: usize) -> f64 {
        let n = self.n;
        let mut v = f.partial(&[k]);
        for m in 0..n {
            v -= self.nonlinear[m][k].value() * f.partial(&[n + m]);
        }
        v
    }

    /// `δ_k f` as a jet one order below `f` (capped by the order of `N`).
    pub fn delta_jet(&self, f: &Jet, k: usize) -> Jet {
        let order = (f.order() - 1).min(self.nonlinear[0][0].order());
        let n = self.n;
        let mut acc = f.derivative(k).truncate(order);
        for m in 0..n {
            let t = &self.nonlinear[m][k].truncate(order) * &f.derivative(n + m).truncate(order);
            acc = &acc - &t;
        }
        acc
    }

    pub fn spray_values(&self) -> Vec<f64> {
        self.spray.iter().map(Jet::value).collect()
    }

    pub fn nonlinear_values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.nonlinear[i][j].value())
    }

    pub fn g_values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.g[i][j].value())
    }

    pub fn g_inv_values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.g_inv[i][j].value())
    }
}

/// Connection data at a point of the slit tangent bundle.
#[derive(Clone, Debug)]
pub struct ConnectionFrame {
    pub base: PointFrame,
    pub spray: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    pub chern: Tensor3,
}

pub fn spray_coeffs(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_fiber(y)?;
    spray_f64(spec, x, y)
}

pub fn nonlinear_connection(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    Ok(LocalGeometry::new(spec, x, y, 3)?.nonlinear_values())
}

pub fn chern_connection(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<ConnectionFrame> {
    let geo = LocalGeometry::new(spec, x, y, 3)?;
    Ok(ConnectionFrame {
        base: fundamental_tensor(spec, x, y)?,
        spray: geo.spray_values(),
        nonlinear: geo.nonlinear_values(),
        chern: geo.chern,
    })
}

/// Chern coefficients only.
pub fn chern_coefficients(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Tensor3> {
    Ok(LocalGeometry::new(spec, x, y, 3)?.chern)
}

/// Spray from an order-2 jet and a dense solve; the geodesic hot path.
pub(crate) fn spray_f64(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim();
    let space = JetSpace::get(2 * n, 2);
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, x[i], i)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, y[i], n + i)).collect();
    let j = spec.f_squared(&xs, &ys);
    let g = DMatrix::from_fn(n, n, |a, b| 0.5 * j.partial(&[n + a, n + b]));
    let rhs = DVector::from_fn(n, |l, _| {
        (0..n).map(|k| y[k] * j.partial(&[k, n + l])).sum::<f64>() - j.partial(&[l])
    });
    let chol = g.cholesky().ok_or_else(|| FinslerError::SingularMetric {
        x: x.to_vec(),
        y: y.to_vec(),
    })?;
    Ok(chol.solve(&rhs).iter().map(|v| 0.25 * v).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Upper,
    Lower,
}

/// A tensor field on the slit tangent bundle, supplied as jets.
pub trait TensorField {
    fn slots(&self) -> Vec<Slot>;

    /// Components in row-major slot order, as jets of order ≥ 1 in the
    /// `2n` variables `(x, y)` based at `(x, y)`.
    fn components(&self, spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<Jet>>;
}

/// `T_{I|k}`; the derivative index is the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalDerivative {
    pub n: usize,
    pub slots: Vec<Slot>,
    pub values: Vec<f64>,
}

impl HorizontalDerivative {
    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[flat(index, self.n)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn flat(index: &[usize], n: usize) -> usize {
    index.iter().fold(0, |acc, &i| acc * n + i)
}

fn unflat(mut k: usize, rank: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; rank];
    for slot in (0..rank).rev() {
        out[slot] = k % n;
        k /= n;
    }
    out
}

pub fn horizontal_derivative<T: TensorField + ?Sized>(
    field: &T,
    spec: &MetricSpec,
    x: &[f64],
    y: &[f64],
) -> Result<HorizontalDerivative> {
    let geo = LocalGeometry::new(spec, x, y, 3)?;
    let comps = field.components(spec, x, y)?;
    Ok(horizontal_with(&geo, &field.slots(), &comps))
}

pub(crate) fn horizontal_with(geo: &LocalGeometry, slots: &[Slot], comps: &[Jet]) -> HorizontalDerivative {
    let n = geo.n;
    let rank = slots.len();
    let count = n.pow(rank as u32);
    assert_eq!(comps.len(), count, "component count does not match slots");
    let vals: Vec<f64> = comps.iter().map(Jet::value).collect();
    let mut out = vec![0.0; count * n];
    for c in 0..count {
        let idx = unflat(c, rank, n);
        for k in 0..n {
            let mut v = geo.delta(&comps[c], k);
            for (s, slot) in slots.iter().enumerate() {
                let mut j = idx.clone();
                for m in 0..n {
                    j[s] = m;
                    let t = vals[flat(&j, n)];
                    v += match slot {
                        Slot::Upper => geo.chern.get(idx[s], k, m) * t,
                        Slot::Lower => -geo.chern.get(m, k, idx[s]) * t,
                    };
                }
            }
            out[c * n + k] = v;
        }
    }
    HorizontalDerivative {
        n,
        slots: slots.iter().copied().chain(std::iter::once(Slot::Lower)).collect(),
        values: out,
    }
}

fn f2_jet(spec: &MetricSpec, x: &[f64], y: &[f64], order: usize) -> Jet {
    let n = spec.dim();
    let space = JetSpace::get(2 * n, order);
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, x[i], i)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, y[i], n + i)).collect();
    spec.f_squared(&xs, &ys)
}

/// `F²` as a scalar field.
pub struct FSquaredField;

impl TensorField for FSquaredField {
    fn slots(&self) -> Vec<Slot> {
        Vec::new()
    }
    fn components(&self, spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<Jet>> {
        Ok(vec![f2_jet(spec, x, y, 1)])
    }
}

/// `g_ij(x, y)`.
pub struct FundamentalTensorField;

impl TensorField for FundamentalTensorField {
    fn slots(&self) -> Vec<Slot> {
        vec![Slot::Lower, Slot::Lower]
    }
    fn components(&self, spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<Jet>> {
        let n = spec.dim();
        let j = f2_jet(spec, x, y, 3);
        Ok((0..n * n)
            .map(|c| j.derivative(n + c / n).derivative(n + c % n).scale(0.5))
            .collect())
    }
}

/// `C_ijk(x, y) = ¼ ∂³F²/∂y^i∂y^j∂y^k`.
pub struct CartanField;

impl TensorField for CartanField {
    fn slots(&self) -> Vec<Slot> {
        vec![Slot::Lower; 3]
    }
    fn components(&self, spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<Vec<Jet>> {
        let n = spec.dim();
        let j = f2_jet(spec, x, y, 4);
        Ok((0..n * n * n)
            .map(|c| {
                let (a, b, d) = (c / (n * n), (c / n) % n, c % n);
                j.derivative(n + a)
                    .derivative(n + b)
                    .derivative(n + d)
                    .scale(0.25)
            })
            .collect())
    }
}

/// A function of position only, given as an expression in `x1..xn`.
pub struct PositionFunction(pub Expr);

impl TensorField for PositionFunction {
    fn slots(&self) -> Vec<Slot> {
        Vec::new()
    }
    fn components(&self, spec: &MetricSpec, x: &[f64], _y: &[f64]) -> Result<Vec<Jet>> {
        let n = spec.dim();
        let space = JetSpace::get(2 * n, 1);
        let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, x[i], i)).collect();
        Ok(vec![self.0.eval(&xs, &xs[0])])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    pub step: f64,
    /// `max_t |F(x, ẋ) − F(x₀, ẋ₀)|`.
    pub drift: f64,
}

impl GeodesicPath {
    pub fn last(&self) -> &GeodesicSample {
        self.samples.last().expect("path has at least one sample")
    }

    /// Rows `t, x.., v.., drift_t` for CSV export.
    pub fn rows(&self, spec: &MetricSpec) -> Vec<Vec<f64>> {
        let f0 = spec.f_value(&self.samples[0].x, &self.samples[0].v);
        self.samples
            .iter()
            .map(|s| {
                let mut r = vec![s.t];
                r.extend(&s.x);
                r.extend(&s.v);
                r.push((spec.f_value(&s.x, &s.v) - f0).abs());
                r
            })
            .collect()
    }
}

fn geodesic_rhs(spec: &MetricSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    Ok(spray_f64(spec, x, v)?.iter().map(|g| -2.0 * g).collect())
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + s * q).collect()
}

/// One classical RK4 step of the geodesic equation with signed step `h`.
pub(crate) fn geodesic_step(
    spec: &MetricSpec,
    x: &[f64],
    v: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let a1 = geodesic_rhs(spec, x, v)?;
    let (x2, v2) = (axpy(x, 0.5 * h, v), axpy(v, 0.5 * h, &a1));
    let a2 = geodesic_rhs(spec, &x2, &v2)?;
    let (x3, v3) = (axpy(x, 0.5 * h, &v2), axpy(v, 0.5 * h, &a2));
    let a3 = geodesic_rhs(spec, &x3, &v3)?;
    let (x4, v4) = (axpy(x, h, &v3), axpy(v, h, &a3));
    let a4 = geodesic_rhs(spec, &x4, &v4)?;
    let n = x.len();
    let xn = (0..n)
        .map(|i| x[i] + h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]))
        .collect();
    let vn = (0..n)
        .map(|i| v[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]))
        .collect();
    Ok((xn, vn))
}

/// Solve `ẍ + 2G(x, ẋ) = 0` from `(x0, y0)` up to parameter `t_max`
/// (negative `t_max` integrates backwards).
pub fn integrate_geodesic(
    spec: &MetricSpec,
    x0: &[f64],
    y0: &[f64],
    t_max: f64,
    step: f64,
) -> Result<GeodesicPath> {
    check_fiber(y0)?;
    if !(step > 0.0) || !t_max.is_finite() {
        return Err(FinslerError::DomainError(format!(
            "geodesic step {step} and horizon {t_max} must be positive and finite"
        )));
    }
    if !spec.chart().contains(x0) {
        return Err(FinslerError::LeftChart { t: 0.0 });
    }
    let steps = (t_max.abs() / step).round().max(1.0) as usize;
    let h = t_max / steps as f64;
    let f0 = spec.f_value(x0, y0);
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(GeodesicSample {
        t: 0.0,
        x: x0.to_vec(),
        v: y0.to_vec(),
    });
    let mut drift: f64 = 0.0;
    let (mut x, mut v) = (x0.to_vec(), y0.to_vec());
    for s in 1..=steps {
        let (xn, vn) = geodesic_step(spec, &x, &v, h)?;
        let t = s as f64 * h;
        if !spec.chart().contains(&xn) {
            return Err(FinslerError::LeftChart { t });
        }
        drift = drift.max((spec.f_value(&xn, &vn) - f0).abs());
        x = xn;
        v = vn;
        samples.push(GeodesicSample {
            t,
            x: x.clone(),
            v: v.clone(),
        });
    }
    Ok(GeodesicPath {
        samples,
        step: h.abs(),
        drift,
    })
}

/// Reference vector used in the Chern coefficients during transport.
#[derive(Clone, Debug, PartialEq)]
pub enum TransportReference {
    PathVelocity,
    Fixed(Vec<f64>),
}

/// `(x, ẋ)` at the three RK4 stages of a step.
type StageStates<'a> = [(&'a [f64], &'a [f64]); 3];

fn transport_rhs(
    spec: &MetricSpec,
    x: &[f64],
    xdot: &[f64],
    v: &[f64],
    reference: &TransportReference,
) -> Result<Vec<f64>> {
    let r = match reference {
        TransportReference::PathVelocity => xdot,
        TransportReference::Fixed(w) => w.as_slice(),
    };
    let gamma = chern_coefficients(spec, x, r)?;
    let n = x.len();
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc -= gamma.get(i, j, k) * xdot[j] * v[k];
                }
            }
            acc
        })
        .collect())
}

fn transport_step(
    spec: &MetricSpec,
    states: StageStates<'_>,
    h: f64,
    v: &[f64],
    reference: &TransportReference,
) -> Result<Vec<f64>> {
    let [s0, sm, s1] = states;
    let k1 = transport_rhs(spec, s0.0, s0.1, v, reference)?;
    let k2 = transport_rhs(spec, sm.0, sm.1, &axpy(v, 0.5 * h, &k1), reference)?;
    let k3 = transport_rhs(spec, sm.0, sm.1, &axpy(v, 0.5 * h, &k2), reference)?;
    let k4 = transport_rhs(spec, s1.0, s1.1, &axpy(v, h, &k3), reference)?;
    Ok((0..v.len())
        .map(|i| v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Solve `v̇^i + Γ^i_jk(x, ref) ẋ^j v^k = 0` along a geodesic; one vector per sample.
pub fn parallel_transport(
    spec: &MetricSpec,
    path: &GeodesicPath,
    v0: &[f64],
    reference: &TransportReference,
) -> Result<Vec<Vec<f64>>> {
    check_fiber(v0)?;
    let mut out = Vec::with_capacity(path.samples.len());
    let mut v = v0.to_vec();
    out.push(v.clone());
    for w in path.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        // midpoint state from a half RK4 step; keeps the stage error O(h⁵)
        let (xm, vm) = geodesic_step(spec, &a.x, &a.v, 0.5 * h)?;
        if !spec.chart().contains(&xm) {
            return Err(FinslerError::LeftChart { t: a.t + 0.5 * h });
        }
        v = transport_step(spec, [(&a.x, &a.v), (&xm, &vm), (&b.x, &b.v)], h, &v, reference)?;
        out.push(v.clone());
    }
    Ok(out)
}

/// Transport along an arbitrary curve `t ↦ (x(t), ẋ(t))` on `[t0, t1]`.
pub fn transport_along_curve(
    spec: &MetricSpec,
    curve: impl Fn(f64) -> (Vec<f64>, Vec<f64>),
    t0: f64,
    t1: f64,
    steps: usize,
    v0: &[f64],
    reference: &TransportReference,
) -> Result<Vec<f64>> {
    check_fiber(v0)?;
    let h = (t1 - t0) / steps.max(1) as f64;
    let mut v = v0.to_vec();
    for s in 0..steps.max(1) {
        let t = t0 + s as f64 * h;
        let (a, m, b) = (curve(t), curve(t + 0.5 * h), curve(t + h));
        for (p, tt) in [(&a.0, t), (&m.0, t + 0.5 * h), (&b.0, t + h)] {
            if !spec.chart().contains(p) {
                return Err(FinslerError::LeftChart { t: tt });
            }
        }
        v = transport_step(spec, [(&a.0, &a.1), (&m.0, &m.1), (&b.0, &b.1)], h, &v, reference)?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randers() -> MetricSpec {
        MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.3", "0.1"]).unwrap()
    }

    #[test]
    fn euclidean_connection_vanishes() {
        let s = MetricSpec::euclidean(2);
        let c = chern_connection(&s, &[0.1, 0.2], &[1.0, -0.5]).unwrap();
        assert!(c.chern.max_abs() == 0.0);
        assert!(c.spray.iter().all(|g| *g == 0.0));
        assert_eq!(c.nonlinear.amax(), 0.0);
    }

    #[test]
    fn fast_spray_agrees_with_jet_spray() {
        let s = randers();
        let (x, y) = ([0.2, -0.1], [0.7, 0.4]);
        let a = spray_coeffs(&s, &x, &y).unwrap();
        let b = LocalGeometry::new(&s, &x, &y, 4).unwrap().spray_values();
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_fiber_rejected() {
        let s = MetricSpec::euclidean(2);
        assert!(matches!(
            spray_coeffs(&s, &[0.0, 0.0], &[0.0, 0.0]),
            Err(FinslerError::ZeroFiberVector)
        ));
        assert!(integrate_geodesic(&s, &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn leaving_the_chart_is_an_error() {
        let s = MetricSpec::euclidean(2);
        let r = integrate_geodesic(&s, &[0.0, 0.0], &[1.0, 0.0], 20.0, 1e-2);
        assert!(matches!(r, Err(FinslerError::LeftChart { .. })));
    }

    #[test]
    fn position_function_horizontal_derivative_is_gradient() {
        let s = randers();
        let f = PositionFunction(Expr::parse("x1^2 * x2 + sin(x2)").unwrap());
        let d = horizontal_derivative(&f, &s, &[0.3, 0.5], &[1.0, 0.2]).unwrap();
        assert!((d.get(&[0]) - 2.0 * 0.3 * 0.5).abs() < 1e-14);
        assert!((d.get(&[1]) - (0.09 + 0.5f64.cos())).abs() < 1e-14);
    }
}
