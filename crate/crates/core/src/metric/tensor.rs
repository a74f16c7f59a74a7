use nalgebra::DMatrix;

use super::MetricSpec;
use crate::error::{FinslerError, Result};
use crate::jet::{Jet, JetSpace};
use crate::tensor::Tensor3;

/// Order-4 Taylor expansion of `F²` in the `2n` variables `(x, y)`.
///
/// Variable `i < n` is `x^{i+1}`, variable `n + i` is `y^{i+1}`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub jet: Jet,
}

impl MetricJet {
    pub const ORDER: usize = 4;

    /// `∂^{|xs|+|ys|} F² / ∂x^{xs} ∂y^{ys}` at the base point.
    pub fn d(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let vars: Vec<usize> = xs
            .iter()
            .copied()
            .chain(ys.iter().map(|&j| self.dim + j))
            .collect();
        self.jet.partial(&vars)
    }

    pub fn value(&self) -> f64 {
        self.jet.value()
    }
}

fn check_fiber(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| *v == 0.0) {
        return Err(FinslerError::ZeroFiberVector);
    }
    Ok(())
}

/// Jet of `F²` in `(x, y)` of the given order.
pub(crate) fn full_jet(spec: &MetricSpec, x: &[f64], y: &[f64], order: usize) -> Jet {
    let n = spec.dim();
    let space = JetSpace::get(2 * n, order);
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, x[i], i)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, y[i], n + i)).collect();
    spec.f_squared(&xs, &ys)
}

pub fn metric_jet(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<MetricJet> {
    check_fiber(y)?;
    Ok(MetricJet {
        dim: spec.dim(),
        x: x.to_vec(),
        y: y.to_vec(),
        jet: full_jet(spec, x, y, MetricJet::ORDER),
    })
}

/// Jet of `F²(x, ·)` in the fiber variables only.
pub fn fiber_jet(spec: &MetricSpec, x: &[f64], y: &[f64], order: usize) -> Jet {
    let n = spec.dim();
    let space = JetSpace::get(n, order);
    let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant_in(&space, v)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| Jet::variable_in(&space, y[i], i)).collect();
    spec.f_squared(&xs, &ys)
}

/// Fundamental tensor, its inverse and the Cartan tensor at `(x, y)`.
#[derive(Clone, Debug)]
pub struct PointFrame {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub cartan: Tensor3,
    pub f_val: f64,
}

impl PointFrame {
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = u.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.g[(i, j)] * u[i] * v[j];
            }
        }
        acc
    }

    /// `y_i = g_ij y^j`.
    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.g[(i, j)] * v[j]).sum())
            .collect()
    }
}

pub(crate) fn symmetric_inverse(g: &DMatrix<f64>, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    let chol = g.clone().cholesky().ok_or_else(|| FinslerError::SingularMetric {
        x: x.to_vec(),
        y: y.to_vec(),
    })?;
    let mut inv = chol.inverse();
    let n = inv.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

pub fn fundamental_tensor(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<PointFrame> {
    check_fiber(y)?;
    let n = spec.dim();
    let jet = fiber_jet(spec, x, y, 3);
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * jet.partial(&[i, j]));
    let g_inv = symmetric_inverse(&g, x, y)?;
    let mut cartan = Tensor3::zeros(n);
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let c = 0.25 * jet.partial(&[i, j, k]);
                cartan.set_symmetric(i, j, k, c);
            }
        }
    }
    let f2 = jet.value();
    Ok(PointFrame {
        x: x.to_vec(),
        y: y.to_vec(),
        g,
        g_inv,
        cartan,
        f_val: f2.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randers() -> MetricSpec {
        MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.5", "0"]).unwrap()
    }

    #[test]
    fn euclidean_jet() {
        let s = MetricSpec::euclidean(2);
        let j = metric_jet(&s, &[0.2, 0.1], &[1.0, 2.0]).unwrap();
        assert_eq!(j.d(&[], &[0, 0]), 2.0);
        assert_eq!(j.d(&[], &[0, 1]), 0.0);
        assert_eq!(j.d(&[], &[0, 0, 1]), 0.0);
        assert_eq!(j.d(&[0], &[0]), 0.0);
    }

    #[test]
    fn riemannian_has_no_cubic_fiber_terms() {
        let s = MetricSpec::sphere_chart(2);
        let j = metric_jet(&s, &[0.3, -0.2], &[0.4, 1.0]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert!(j.d(&[], &[a, b, c]).abs() < 1e-14);
                    for d in 0..2 {
                        assert!(j.d(&[], &[a, b, c, d]).abs() < 1e-14);
                    }
                }
            }
        }
        let pf = fundamental_tensor(&s, &[0.3, -0.2], &[0.4, 1.0]).unwrap();
        let a = 4.0 / (1.0f64 + 0.13).powi(2);
        assert!((pf.g[(0, 0)] - a).abs() < 1e-14);
        assert!(pf.cartan.max_abs() < 1e-14);
    }

    #[test]
    fn randers_third_fiber_derivative_matches_finite_differences() {
        let s = randers();
        let x = [0.0, 0.0];
        let j = metric_jet(&s, &x, &[1.0, 0.0]).unwrap();
        let f2 = |y0: f64| {
            let f = super::super::eval_metric(&s, &x, &[y0, 0.0]).unwrap();
            f * f
        };
        let h = 1e-2;
        // five-point third derivative
        let fd = (f2(1.0 + 2.0 * h) - 2.0 * f2(1.0 + h) + 2.0 * f2(1.0 - h) - f2(1.0 - 2.0 * h))
            / (2.0 * h * h * h);
        assert!((j.d(&[], &[0, 0, 0]) - fd).abs() < 1e-6, "{} vs {fd}", j.d(&[], &[0, 0, 0]));
    }

    #[test]
    fn zero_fiber_is_an_error() {
        let s = MetricSpec::euclidean(2);
        assert!(matches!(
            metric_jet(&s, &[0.0, 0.0], &[0.0, 0.0]),
            Err(FinslerError::ZeroFiberVector)
        ));
        assert!(fundamental_tensor(&s, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
