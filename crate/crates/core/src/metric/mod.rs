//! Parametric Finsler metric families on a box chart.
//!
//! Every tensor in the crate is derived from [`MetricSpec::f_squared`], which
//! evaluates `F²(x, y)` over any [`Scalar`]; seeding it with jets gives exact
//! derivatives in both the base and fiber variables.

mod legendre;
mod misalignment;
mod tensor;

pub use legendre::{legendre_dual, legendre_dual_jet, legendre_with_metric, LegendreDual};
pub use misalignment::{misalignment, Misalignment};
pub use tensor::{fiber_jet, fundamental_tensor, metric_jet, MetricJet, PointFrame};

use nalgebra::DMatrix;

use crate::error::{FinslerError, Result};
use crate::expr::{Expr, Func};
use crate::jet::Scalar;

/// Symmetric matrix of coefficient expressions `a_ij(x)`.
pub type MatrixExpr = Vec<Vec<Expr>>;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Euclidean,
    /// `F² = a_ij(x) y^i y^j`.
    Riemannian { a: MatrixExpr },
    /// `F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i` with `|b|_a < 1`.
    Randers { a: MatrixExpr, b: Vec<Expr> },
    /// `F = exp(φ(x)) · F_base`.
    Conformal { base: Box<Family>, phi: Expr },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Euclidean => "euclidean",
            Family::Riemannian { .. } => "riemannian",
            Family::Randers { .. } => "randers",
            Family::Conformal { .. } => "conformal",
        }
    }

    /// True when `F²` is a quadratic form in `y` at every point.
    pub fn is_riemannian(&self) -> bool {
        match self {
            Family::Euclidean | Family::Riemannian { .. } => true,
            Family::Randers { .. } => false,
            Family::Conformal { base, .. } => base.is_riemannian(),
        }
    }

    /// True when no coefficient depends on `x` (a Minkowski space).
    pub fn is_translation_invariant(&self) -> bool {
        let all_const = |m: &MatrixExpr| m.iter().flatten().all(Expr::is_constant);
        match self {
            Family::Euclidean => true,
            Family::Riemannian { a } => all_const(a),
            Family::Randers { a, b } => all_const(a) && b.iter().all(Expr::is_constant),
            Family::Conformal { base, phi } => phi.is_constant() && base.is_translation_invariant(),
        }
    }

    fn max_var(&self) -> Option<usize> {
        let m = |a: &MatrixExpr| a.iter().flatten().filter_map(Expr::max_var).max();
        match self {
            Family::Euclidean => None,
            Family::Riemannian { a } => m(a),
            Family::Randers { a, b } => m(a).max(b.iter().filter_map(Expr::max_var).max()),
            Family::Conformal { base, phi } => base.max_var().max(phi.max_var()),
        }
    }

    fn check_shapes(&self, n: usize) -> Result<()> {
        let square = |a: &MatrixExpr| -> Result<()> {
            if a.len() != n || a.iter().any(|r| r.len() != n) {
                return Err(FinslerError::config(
                    "metric.a",
                    format!("expected a {n}x{n} matrix"),
                ));
            }
            Ok(())
        };
        match self {
            Family::Euclidean => Ok(()),
            Family::Riemannian { a } => square(a),
            Family::Randers { a, b } => {
                square(a)?;
                if b.len() != n {
                    return Err(FinslerError::config(
                        "metric.b",
                        format!("expected {n} components"),
                    ));
                }
                Ok(())
            }
            Family::Conformal { base, .. } => base.check_shapes(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Measure {
    #[default]
    Lebesgue,
    /// `dμ = σ(x) dx¹…dxⁿ` with `σ > 0`.
    Density(Expr),
}

impl Measure {
    pub fn density<S: Scalar>(&self, x: &[S], template: &S) -> S {
        match self {
            Measure::Lebesgue => template.lift(1.0),
            Measure::Density(e) => e.eval(x, template),
        }
    }

    pub fn density_f64(&self, x: &[f64]) -> f64 {
        self.density(x, &0.0)
    }

    /// `log σ`, evaluated without forming σ when possible.
    pub fn log_density<S: Scalar>(&self, x: &[S], template: &S) -> S {
        match self {
            Measure::Lebesgue => template.lift(0.0),
            Measure::Density(Expr::Call(Func::Exp, inner)) => inner.eval(x, template),
            Measure::Density(e) => e.eval(x, template).ln(),
        }
    }

    pub fn gaussian(n: usize) -> Measure {
        Measure::gaussian_scaled(n, 1.0)
    }

    /// `exp(-κ|x|²/2)`.
    pub fn gaussian_scaled(n: usize, kappa: f64) -> Measure {
        let sq = (0..n)
            .map(|i| Expr::var(i).pow(Expr::constant(2.0)))
            .reduce(|a, b| a + b)
            .unwrap_or(Expr::constant(0.0));
        Measure::Density(Expr::call(
            Func::Exp,
            -(Expr::constant(0.5 * kappa) * sq),
        ))
    }
}

/// Axis-aligned coordinate box the metric lives on.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(FinslerError::config("chart", "lo and hi must have equal nonzero length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(FinslerError::config("chart", "each lo must be below hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// `per_axis^n` points on a tensor-product net, corners included.
    pub fn net(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.lo.len();
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|d| {
                        let k = idx % per_axis;
                        idx /= per_axis;
                        let t = if per_axis == 1 { 0.5 } else { k as f64 / (per_axis - 1) as f64 };
                        self.lo[d] + t * (self.hi[d] - self.lo[d])
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    family: Family,
    dim: usize,
    measure: Measure,
    chart: ChartBox,
}

fn quad<S: Scalar>(a: &MatrixExpr, x: &[S], y: &[S], t: &S) -> S {
    let n = y.len();
    let mut acc = t.lift(0.0);
    for i in 0..n {
        for j in 0..n {
            let aij = match a[i][j].constant_value() {
                Some(0.0) => continue,
                Some(c) => t.lift(c),
                None => a[i][j].eval(x, t),
            };
            acc = acc + aij * y[i].clone() * y[j].clone();
        }
    }
    acc
}

fn family_f2<S: Scalar>(family: &Family, x: &[S], y: &[S], t: &S) -> S {
    match family {
        Family::Euclidean => y
            .iter()
            .fold(t.lift(0.0), |acc, v| acc + v.clone() * v.clone()),
        Family::Riemannian { a } => quad(a, x, y, t),
        Family::Randers { a, b } => {
            let f = randers_f(a, b, x, y, t);
            f.clone() * f
        }
        Family::Conformal { base, phi } => {
            let s = (phi.eval(x, t) * t.lift(2.0)).exp();
            s * family_f2(base, x, y, t)
        }
    }
}

fn randers_f<S: Scalar>(a: &MatrixExpr, b: &[Expr], x: &[S], y: &[S], t: &S) -> S {
    let alpha = quad(a, x, y, t).sqrt();
    let beta = b
        .iter()
        .zip(y)
        .fold(t.lift(0.0), |acc, (bi, yi)| acc + bi.eval(x, t) * yi.clone());
    alpha + beta
}

fn family_f<S: Scalar>(family: &Family, x: &[S], y: &[S], t: &S) -> S {
    match family {
        Family::Randers { a, b } => randers_f(a, b, x, y, t),
        Family::Conformal { base, phi } => phi.eval(x, t).exp() * family_f(base, x, y, t),
        _ => family_f2(family, x, y, t).sqrt(),
    }
}

fn eval_matrix(a: &MatrixExpr, x: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| a[i][j].eval_f64(x))
}

fn sphere_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // axis directions plus a deterministic quasi-random spread
            let mut dirs = Vec::new();
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                dirs.push(e.clone());
                e[i] = -1.0;
                dirs.push(e);
            }
            let golden = 0.618_033_988_749_895;
            for k in 0..32 {
                let v: Vec<f64> = (0..n)
                    .map(|d| {
                        let s = ((k as f64 + 1.0) * golden * (d as f64 + 1.0).sqrt()).fract();
                        2.0 * s - 1.0
                    })
                    .collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    dirs.push(v.iter().map(|c| c / norm).collect());
                }
            }
            dirs
        }
    }
}

impl MetricSpec {
    /// Build and validate a spec on a sample net of the chart.
    pub fn new(family: Family, dim: usize, measure: Measure, chart: ChartBox) -> Result<Self> {
        if dim == 0 {
            return Err(FinslerError::config("metric.dimension", "must be positive"));
        }
        if chart.lo.len() != dim {
            return Err(FinslerError::config("chart", "dimension mismatch"));
        }
        family.check_shapes(dim)?;
        let max_var = family.max_var().max(match &measure {
            Measure::Density(e) => e.max_var(),
            Measure::Lebesgue => None,
        });
        if let Some(v) = max_var {
            if v >= dim {
                return Err(FinslerError::config(
                    "metric",
                    format!("expression references x{} but dimension is {dim}", v + 1),
                ));
            }
        }
        let spec = Self {
            family,
            dim,
            measure,
            chart,
        };
        spec.validate_on_net()?;
        Ok(spec)
    }

    fn validate_on_net(&self) -> Result<()> {
        let per_axis = match self.dim {
            1 => 9,
            2 => 7,
            _ => 4,
        };
        let dirs = sphere_directions(self.dim);
        for x in self.chart.net(per_axis) {
            if let Measure::Density(_) = self.measure {
                let s = self.measure.density_f64(&x);
                if !(s > 0.0) || !s.is_finite() {
                    return Err(FinslerError::NonpositiveDensity(s));
                }
            }
            self.check_randers_bound(&self.family, &x)?;
            for y in &dirs {
                let f = family_f(&self.family, &x, y, &0.0);
                if !(f > 0.0) || !f.is_finite() {
                    return Err(FinslerError::NotStronglyConvex(format!(
                        "F(x, y) = {f} at x = {x:?}, y = {y:?}"
                    )));
                }
                match fundamental_tensor(self, &x, y) {
                    Ok(_) => {}
                    Err(FinslerError::SingularMetric { .. }) => {
                        return Err(FinslerError::NotStronglyConvex(format!(
                            "g(x, y) is not positive definite at x = {x:?}, y = {y:?}"
                        )))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    fn check_randers_bound(&self, family: &Family, x: &[f64]) -> Result<()> {
        match family {
            Family::Randers { a, b } => {
                let am = eval_matrix(a, x);
                let chol = am.clone().cholesky().ok_or_else(|| {
                    FinslerError::NotStronglyConvex(format!("a(x) not positive definite at {x:?}"))
                })?;
                let bv = nalgebra::DVector::from_iterator(self.dim, b.iter().map(|e| e.eval_f64(x)));
                let norm2 = bv.dot(&chol.solve(&bv));
                if norm2 >= 1.0 {
                    return Err(FinslerError::NotStronglyConvex(format!(
                        "Randers |b|_a = {} >= 1 at x = {x:?}",
                        norm2.sqrt()
                    )));
                }
                Ok(())
            }
            Family::Conformal { base, .. } => self.check_randers_bound(base, x),
            _ => Ok(()),
        }
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(Family::Euclidean, n, Measure::Lebesgue, ChartBox::cube(n, 1.0))
            .expect("euclidean spec is valid")
    }

    /// Riemannian metric from coefficient strings `a[i][j]` in `x1..xn`.
    pub fn riemannian(a: &[Vec<&str>]) -> Result<Self> {
        let n = a.len();
        let a = parse_matrix(a)?;
        Self::new(Family::Riemannian { a }, n, Measure::Lebesgue, ChartBox::cube(n, 1.0))
    }

    pub fn randers(a: &[Vec<&str>], b: &[&str]) -> Result<Self> {
        let n = a.len();
        let a = parse_matrix(a)?;
        let b = b.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(Family::Randers { a, b }, n, Measure::Lebesgue, ChartBox::cube(n, 1.0))
    }

    /// Stereographic chart of the unit sphere, `a = 4δ/(1+|x|²)²`.
    pub fn sphere_chart(n: usize) -> Self {
        Self::conformal_flat(n, 1.0, ChartBox::cube(n, 1.0))
    }

    /// Poincaré ball chart of hyperbolic space, `a = 4δ/(1-|x|²)²`.
    pub fn hyperbolic_chart(n: usize) -> Self {
        let half = 0.9 / (n as f64).sqrt();
        Self::conformal_flat(n, -1.0, ChartBox::cube(n, half))
    }

    fn conformal_flat(n: usize, sign: f64, chart: ChartBox) -> Self {
        let sq = (0..n)
            .map(|i| Expr::var(i).pow(Expr::constant(2.0)))
            .reduce(|a, b| a + b)
            .expect("n >= 1");
        let factor = Expr::constant(4.0)
            / (Expr::constant(1.0) + Expr::constant(sign) * sq).pow(Expr::constant(2.0));
        let a = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { factor.clone() } else { Expr::constant(0.0) })
                    .collect()
            })
            .collect();
        Self::new(Family::Riemannian { a }, n, Measure::Lebesgue, chart)
            .expect("constant-curvature chart is valid")
    }

    pub fn with_measure(self, measure: Measure) -> Result<Self> {
        Self::new(self.family, self.dim, measure, self.chart)
    }

    pub fn with_chart(self, chart: ChartBox) -> Result<Self> {
        Self::new(self.family, self.dim, self.measure, chart)
    }

    /// Same metric carrying its Riemannian volume `sqrt(det a)` as measure.
    ///
    /// Only meaningful for Riemannian families.
    pub fn with_riemannian_volume(self) -> Result<Self> {
        let density = riemannian_volume_expr(&self.family, self.dim).ok_or_else(|| {
            FinslerError::config("measure", "Riemannian volume needs a Riemannian family")
        })?;
        self.with_measure(Measure::Density(density))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn chart(&self) -> &ChartBox {
        &self.chart
    }

    pub fn is_riemannian(&self) -> bool {
        self.family.is_riemannian()
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.family.is_translation_invariant()
    }

    /// `F²(x, y)` over any scalar type.
    pub fn f_squared<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        family_f2(&self.family, x, y, &y[0])
    }

    pub fn f_value<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        family_f(&self.family, x, y, &y[0])
    }

    /// `a_ij(x)` when `F²` is a quadratic form at `x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        fn rec(f: &Family, n: usize, x: &[f64]) -> Option<DMatrix<f64>> {
            match f {
                Family::Euclidean => Some(DMatrix::identity(n, n)),
                Family::Riemannian { a } => Some(eval_matrix(a, x)),
                Family::Randers { .. } => None,
                Family::Conformal { base, phi } => {
                    rec(base, n, x).map(|m| m * (2.0 * phi.eval_f64(x)).exp())
                }
            }
        }
        rec(&self.family, self.dim, x)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.measure.density_f64(x)
    }
}

/// `F(x, y)`; errors on `y = 0`.
pub fn eval_metric(spec: &MetricSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if y.iter().all(|v| *v == 0.0) {
        return Err(FinslerError::ZeroFiberVector);
    }
    Ok(spec.f_value(x, y))
}

pub(crate) fn parse_matrix(a: &[Vec<&str>]) -> Result<MatrixExpr> {
    a.iter()
        .map(|row| row.iter().map(|s| Expr::parse(s)).collect())
        .collect()
}

fn riemannian_volume_expr(family: &Family, n: usize) -> Option<Expr> {
    match family {
        Family::Euclidean => Some(Expr::constant(1.0)),
        Family::Riemannian { a } => Some(Expr::call(Func::Sqrt, det_expr(a, n))),
        Family::Conformal { base, phi } if base.is_riemannian() => {
            let base_vol = riemannian_volume_expr(base, n)?;
            Some(Expr::call(Func::Exp, Expr::constant(n as f64) * phi.clone()) * base_vol)
        }
        _ => None,
    }
}

fn det_expr(a: &MatrixExpr, n: usize) -> Expr {
    fn minor(a: &MatrixExpr, rows: &[usize], cols: &[usize]) -> Expr {
        if rows.len() == 1 {
            return a[rows[0]][cols[0]].clone();
        }
        let mut acc: Option<Expr> = None;
        for (k, &c) in cols.iter().enumerate() {
            let sub_cols: Vec<usize> = cols.iter().copied().filter(|&j| j != c).collect();
            let term = a[rows[0]][c].clone() * minor(a, &rows[1..], &sub_cols);
            acc = Some(match acc {
                None => term,
                Some(prev) if k % 2 == 0 => prev + term,
                Some(prev) => prev - term,
            });
        }
        acc.expect("nonempty")
    }
    let idx: Vec<usize> = (0..n).collect();
    minor(a, &idx, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_norm() {
        let s = MetricSpec::euclidean(2);
        assert_eq!(eval_metric(&s, &[0.1, 0.2], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn randers_is_asymmetric() {
        let s = MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.5", "0"]).unwrap();
        assert!((eval_metric(&s, &[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!((eval_metric(&s, &[0.0, 0.0], &[-1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_fiber_vector_rejected() {
        let s = MetricSpec::euclidean(2);
        assert!(matches!(
            eval_metric(&s, &[0.0, 0.0], &[0.0, 0.0]),
            Err(FinslerError::ZeroFiberVector)
        ));
    }

    #[test]
    fn randers_with_large_drift_is_rejected() {
        let err = MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["1.2", "0"]).unwrap_err();
        assert!(matches!(err, FinslerError::NotStronglyConvex(_)), "{err}");
        let err =
            MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.3 + 0.8*x1", "0"]).unwrap_err();
        assert!(matches!(err, FinslerError::NotStronglyConvex(_)));
    }

    #[test]
    fn nonpositive_density_rejected() {
        let err = MetricSpec::euclidean(1)
            .with_measure(Measure::Density(Expr::parse("x1").unwrap()))
            .unwrap_err();
        assert!(matches!(err, FinslerError::NonpositiveDensity(_)));
    }

    #[test]
    fn variable_out_of_range_rejected() {
        let err = MetricSpec::riemannian(&[vec!["1 + x3^2", "0"], vec!["0", "1"]]).unwrap_err();
        assert!(matches!(err, FinslerError::ConfigParse { .. }));
    }

    #[test]
    fn riemannian_volume_of_sphere_chart() {
        let s = MetricSpec::sphere_chart(2).with_riemannian_volume().unwrap();
        let x = [0.3, -0.4];
        let expect = 4.0 / (1.0f64 + 0.25).powi(2);
        assert!((s.density(&x) - expect).abs() < 1e-14);
    }

    #[test]
    fn homogeneity_of_f() {
        let s = MetricSpec::randers(
            &[vec!["1 + 0.2*x1^2", "0.1*x2"], vec!["0.1*x2", "1"]],
            &["0.3*sin(x1)", "0.2"],
        )
        .unwrap();
        let x = [0.4, -0.3];
        let y = [0.7, -1.1];
        let f1 = eval_metric(&s, &x, &y).unwrap();
        let f2 = eval_metric(&s, &x, &[1.4, -2.2]).unwrap();
        assert!((f2 - 2.0 * f1).abs() <= 1e-12 * f1);
    }
}
