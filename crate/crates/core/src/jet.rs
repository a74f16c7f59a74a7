//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] stores the Taylor coefficients `c_α = ∂^α f / α!` of a function
//! of `nvars` variables around a base point, for every multi-index with
//! `|α| <= order`. Arithmetic on jets is exact up to truncation, so evaluating
//! an expression on jets seeded with [`Jet::variable`] yields every partial
//! derivative up to `order` with no finite differencing.
//!
//! Monomial layout and the product table are shared between all jets of the
//! same `(nvars, order)` through a cached [`JetSpace`].

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial layout and multiplication table for jets of a given shape.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    // (i, j, k): coef[k] += a[i] * b[j]
    products: Vec<(u32, u32, u32)>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("len", &self.monomials.len())
            .finish()
    }
}

fn enumerate_monomials(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    fn rec(var: usize, remaining: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if var + 1 == cur.len() {
            cur[var] = remaining as u8;
            out.push(cur.clone());
            return;
        }
        for k in (0..=remaining).rev() {
            cur[var] = k as u8;
            rec(var + 1, remaining - k, cur, out);
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        out.push(Vec::new());
        return out;
    }
    for deg in 0..=order {
        let mut cur = vec![0u8; nvars];
        rec(0, deg, &mut cur, &mut out);
    }
    out
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> Self {
        let monomials = enumerate_monomials(nvars, order);
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        let mut sum = vec![0u8; nvars];
        for (i, a) in monomials.iter().enumerate() {
            let da: usize = a.iter().map(|&e| e as usize).sum();
            for (j, b) in monomials.iter().enumerate() {
                let db: usize = b.iter().map(|&e| e as usize).sum();
                if da + db > order {
                    continue;
                }
                for v in 0..nvars {
                    sum[v] = a[v] + b[v];
                }
                let k = index[&sum];
                products.push((i as u32, j as u32, k as u32));
            }
        }
        products.sort_by_key(|&(_, _, k)| k);
        Self {
            nvars,
            order,
            monomials,
            index,
            products,
        }
    }

    /// Shared space for the given shape, built on first use.
    pub fn get(nvars: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.index.get(exponents).copied()
    }
}

/// Truncated Taylor polynomial of a scalar function.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.space.nvars)
            .field("order", &self.space.order)
            .field("coef", &self.coef)
            .finish()
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, v| acc * v as f64)
}

impl Jet {
    pub fn constant_in(space: &Arc<JetSpace>, value: f64) -> Self {
        let mut coef = vec![0.0; space.len()];
        coef[0] = value;
        Self {
            space: space.clone(),
            coef,
        }
    }

    /// The coordinate function `value + ε_var`.
    pub fn variable_in(space: &Arc<JetSpace>, value: f64, var: usize) -> Self {
        let mut jet = Self::constant_in(space, value);
        if space.order >= 1 {
            let mut e = vec![0u8; space.nvars];
            e[var] = 1;
            let k = space.index[&e];
            jet.coef[k] = 1.0;
        }
        jet
    }

    pub fn constant(nvars: usize, order: usize, value: f64) -> Self {
        Self::constant_in(&JetSpace::get(nvars, order), value)
    }

    pub fn variable(nvars: usize, order: usize, value: f64, var: usize) -> Self {
        Self::variable_in(&JetSpace::get(nvars, order), value, var)
    }

    /// Seeds one jet per coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::get(point.len(), order);
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable_in(&space, v, i))
            .collect()
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    pub fn constant_like(&self, value: f64) -> Self {
        Self::constant_in(&self.space, value)
    }

    /// Taylor coefficient for the given exponent vector (zero above the order).
    pub fn taylor(&self, exponents: &[u8]) -> f64 {
        self.space
            .index_of(exponents)
            .map(|k| self.coef[k])
            .unwrap_or(0.0)
    }

    /// Partial derivative with respect to the listed variables (repetitions allowed).
    pub fn partial(&self, vars: &[usize]) -> f64 {
        if vars.len() > self.space.order {
            return 0.0;
        }
        let mut e = vec![0u8; self.space.nvars];
        for &v in vars {
            e[v] += 1;
        }
        let scale: f64 = e.iter().map(|&k| factorial(k as usize)).product();
        self.taylor(&e) * scale
    }

    /// Jet of `∂f/∂x_var`, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        let order = self.space.order.saturating_sub(1);
        let target = JetSpace::get(self.space.nvars, order);
        let mut coef = vec![0.0; target.len()];
        let mut e = vec![0u8; self.space.nvars];
        for (k, m) in target.monomials.iter().enumerate() {
            e.copy_from_slice(m);
            e[var] += 1;
            if let Some(src) = self.space.index_of(&e) {
                coef[k] = self.coef[src] * e[var] as f64;
            }
        }
        Jet {
            space: target,
            coef,
        }
    }

    /// Same function with coefficients above `order` dropped.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.space.order {
            return self.clone();
        }
        let target = JetSpace::get(self.space.nvars, order);
        let coef = (0..target.len()).map(|k| self.coef[k]).collect();
        Jet {
            space: target,
            coef,
        }
    }

    /// Reinterpret in a space of higher order (new coefficients are zero).
    pub fn promote(&self, order: usize) -> Jet {
        if order <= self.space.order {
            return self.truncate(order);
        }
        let target = JetSpace::get(self.space.nvars, order);
        let mut coef = vec![0.0; target.len()];
        coef[..self.coef.len()].copy_from_slice(&self.coef);
        Jet {
            space: target,
            coef,
        }
    }

    /// Substitute `x_v = base_v + args[v]` into this polynomial.
    ///
    /// `args` are jets in a common target space; their constant terms are
    /// treated as offsets from this jet's base point. The result is exact up
    /// to the smaller of the two orders when the offsets have zero constant term.
    pub fn compose(&self, args: &[Jet]) -> Jet {
        assert_eq!(args.len(), self.space.nvars, "compose arity mismatch");
        let target = args[0].space.clone();
        let max_pow = self.space.order;
        let powers: Vec<Vec<Jet>> = args
            .iter()
            .map(|a| {
                let mut p = Vec::with_capacity(max_pow + 1);
                p.push(Jet::constant_in(&target, 1.0));
                for k in 1..=max_pow {
                    let next = &p[k - 1] * a;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut out = Jet::constant_in(&target, 0.0);
        for (k, m) in self.space.monomials.iter().enumerate() {
            let c = self.coef[k];
            if c == 0.0 {
                continue;
            }
            let mut term = Jet::constant_in(&target, c);
            for (v, &e) in m.iter().enumerate() {
                if e > 0 {
                    term = &term * &powers[v][e as usize];
                }
            }
            out = &out + &term;
        }
        out
    }

    fn same_space(&self, other: &Jet) {
        debug_assert!(
            Arc::ptr_eq(&self.space, &other.space)
                || (self.space.nvars == other.space.nvars && self.space.order == other.space.order),
            "jet space mismatch"
        );
    }

    fn nilpotent(&self) -> Jet {
        let mut p = self.clone();
        p.coef[0] = 0.0;
        p
    }

    /// `Σ_k d_k (f - f0)^k` by Horner's rule.
    fn apply_series(&self, d: &[f64]) -> Jet {
        let p = self.nilpotent();
        let mut out = self.constant_like(d[d.len() - 1]);
        for k in (0..d.len() - 1).rev() {
            out = &out * &p;
            out.coef[0] += d[k];
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let c = self.value().exp();
        let d: Vec<f64> = (0..=self.order()).map(|k| c / factorial(k)).collect();
        self.apply_series(&d)
    }

    pub fn ln(&self) -> Jet {
        let c = self.value();
        let mut d = vec![c.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign / (k as f64 * c.powi(k as i32)));
        }
        self.apply_series(&d)
    }

    pub fn powf(&self, alpha: f64) -> Jet {
        let c = self.value();
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            d.push(binom * c.powf(alpha - k as f64));
            binom *= (alpha - k as f64) / (k as f64 + 1.0);
        }
        self.apply_series(&d)
    }

    pub fn powi(&self, n: i32) -> Jet {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut out = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        out
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        let c = self.value();
        let d: Vec<f64> = (0..=self.order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / c.powi(k as i32 + 1)
            })
            .collect();
        self.apply_series(&d)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order())
            .map(|k| cyc[k % 4] / factorial(k))
            .collect();
        self.apply_series(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order())
            .map(|k| cyc[k % 4] / factorial(k))
            .collect();
        self.apply_series(&d)
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coef[0] += s;
        out
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        let mut coef = vec![0.0; self.coef.len()];
        for &(i, j, k) in &self.space.products {
            let a = self.coef[i as usize];
            if a != 0.0 {
                coef[k as usize] += a * rhs.coef[j as usize];
            }
        }
        Jet {
            space: self.space.clone(),
            coef,
        }
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self * &rhs.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Numeric type an expression tree can be evaluated over.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant of the same kind (same jet space) as `self`.
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, alpha: f64) -> Self;

    fn tan(&self) -> Self {
        self.sin() / self.cos()
    }
    fn sinh(&self) -> Self {
        let e = self.exp();
        let ei = self.lift(1.0) / e.clone();
        (e - ei) * self.lift(0.5)
    }
    fn cosh(&self) -> Self {
        let e = self.exp();
        let ei = self.lift(1.0) / e.clone();
        (e + ei) * self.lift(0.5)
    }
    fn tanh(&self) -> Self {
        let e2 = (self.clone() * self.lift(2.0)).exp();
        (e2.clone() - self.lift(1.0)) / (e2 + self.lift(1.0))
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, alpha: f64) -> Self {
        f64::powf(*self, alpha)
    }
    fn tan(&self) -> Self {
        f64::tan(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
}

impl Scalar for Jet {
    fn lift(&self, c: f64) -> Self {
        self.constant_like(c)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn exp(&self) -> Self {
        Jet::exp(self)
    }
    fn ln(&self) -> Self {
        Jet::ln(self)
    }
    fn sqrt(&self) -> Self {
        Jet::sqrt(self)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn powi(&self, n: i32) -> Self {
        Jet::powi(self, n)
    }
    fn powf(&self, alpha: f64) -> Self {
        Jet::powf(self, alpha)
    }
}

/// Solve `A X = B` over jets by Gauss–Jordan elimination with partial
/// pivoting on the constant terms. Returns `None` when a pivot vanishes.
pub fn solve_jet_system(a: &[Vec<Jet>], b: &[Vec<Jet>]) -> Option<Vec<Vec<Jet>>> {
    let n = a.len();
    let mut a: Vec<Vec<Jet>> = a.to_vec();
    let mut b: Vec<Vec<Jet>> = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .value()
                .abs()
                .partial_cmp(&a[j][col].value().abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].value().abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for k in 0..n {
            a[col][k] = &a[col][k] * &inv;
        }
        for k in 0..b[col].len() {
            b[col][k] = &b[col][k] * &inv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col].clone();
            if f.coefficients().iter().all(|&c| c == 0.0) {
                continue;
            }
            for k in 0..n {
                let t = &f * &a[col][k];
                a[row][k] = &a[row][k] - &t;
            }
            for k in 0..b[row].len() {
                let t = &f * &b[col][k];
                b[row][k] = &b[row][k] - &t;
            }
        }
    }
    Some(b)
}

/// Inverse of a square jet matrix.
pub fn invert_jet_matrix(a: &[Vec<Jet>]) -> Option<Vec<Vec<Jet>>> {
    let n = a.len();
    let template = &a[0][0];
    let eye: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| template.constant_like(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    solve_jet_system(a, &eye)
}

/// Determinant of a square jet matrix via elimination.
pub fn jet_determinant(a: &[Vec<Jet>]) -> Jet {
    let n = a.len();
    let mut a: Vec<Vec<Jet>> = a.to_vec();
    let mut det = a[0][0].constant_like(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .value()
                    .abs()
                    .partial_cmp(&a[j][col].value().abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det = &det * &a[col][col];
        let inv = a[col][col].recip();
        for row in col + 1..n {
            let f = &a[row][col] * &inv;
            for k in col..n {
                let t = &f * &a[col][k];
                a[row][k] = &a[row][k] - &t;
            }
        }
    }
    det
}
