//! Dirichlet problem for exponentially harmonic functions by minimizing the
//! discrete exponential energy, and the expanding-ball Liouville experiment.
//!
//! The energy is assembled on P1 elements: segments in one dimension, and in
//! two dimensions each grid cell split along its `(i, j)–(i+1, j+1)` diagonal.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{forward_distance, mixed_weighted_ricci, Weight, WeightedRicci};
use crate::error::{FinslerError, Result};
use crate::expr::Expr;
use crate::grid::{GridDomain, ScalarField};
use crate::metric::{legendre_dual, legendre_with_metric, ChartBox, MetricSpec};
use crate::operators::FieldJet;
use crate::tensor::Tensor3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Bound on the relative nodal residual: `|∂𝔼_h/∂u_k|`, less its rounding
    /// floor, divided by the gross flux `Σ_T |∂𝔼_T/∂u_k|` through the node.
    pub tol: f64,
    /// Newton steps shorter than this (max-norm) end the iteration.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            step_tol: 1e-13,
            max_iter: 100,
            armijo: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.step_tol > 0.0) || self.max_iter == 0 {
            return Err(FinslerError::config("solver", "tolerances and max_iter must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(FinslerError::config("solver.armijo", "must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Dirichlet data on the boundary layer of a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryData {
    Expr(Expr),
    Nodal(ScalarField),
}

impl BoundaryData {
    fn value(&self, domain: &GridDomain, k: usize) -> f64 {
        match self {
            BoundaryData::Expr(e) => e.eval_f64(&domain.point(k)),
            BoundaryData::Nodal(f) => f.values[k],
        }
    }
}

struct Element {
    nodes: Vec<usize>,
    /// Row `d` holds the coefficients of `∂_d u` on the element.
    b: DMatrix<f64>,
    weight: f64,
    centroid: Vec<f64>,
}

fn elements(domain: &GridDomain, spec: &MetricSpec) -> Vec<Element> {
    let h = domain.spacing();
    let mut out = Vec::new();
    if domain.dim() == 1 {
        for i in 0..domain.nx() - 1 {
            let mid = vec![domain.point(i)[0] + 0.5 * h[0]];
            out.push(Element {
                nodes: vec![i, i + 1],
                b: DMatrix::from_row_slice(1, 2, &[-1.0 / h[0], 1.0 / h[0]]),
                weight: h[0] * spec.density(&mid),
                centroid: mid,
            });
        }
        return out;
    }
    let (ix, iy) = (1.0 / h[0], 1.0 / h[1]);
    let area = 0.5 * h[0] * h[1];
    for j in 0..domain.ny() - 1 {
        for i in 0..domain.nx() - 1 {
            let a = domain.index(i, j);
            let b = domain.index(i + 1, j);
            let c = domain.index(i + 1, j + 1);
            let d = domain.index(i, j + 1);
            let p = domain.point(a);
            let lower = vec![p[0] + 2.0 * h[0] / 3.0, p[1] + h[1] / 3.0];
            let upper = vec![p[0] + h[0] / 3.0, p[1] + 2.0 * h[1] / 3.0];
            out.push(Element {
                nodes: vec![a, b, c],
                b: DMatrix::from_row_slice(2, 3, &[-ix, ix, 0.0, 0.0, -iy, iy]),
                weight: area * spec.density(&lower),
                centroid: lower,
            });
            out.push(Element {
                nodes: vec![a, c, d],
                b: DMatrix::from_row_slice(2, 3, &[0.0, ix, -ix, -iy, 0.0, iy]),
                weight: area * spec.density(&upper),
                centroid: upper,
            });
        }
    }
    out
}

struct ElementState {
    energy: f64,
    /// `e = F*²(ξ)` on the element.
    e: f64,
    /// `∇ = ξ♯`.
    dual: Vec<f64>,
    /// `w e^{e/2} ∇` pulled back to the element nodes.
    grad: Vec<f64>,
    /// Hessian of `½F*²` at `ξ`.
    g_star: Option<DMatrix<f64>>,
    /// `w e^{e/2} Bᵀ(g*(ξ) + ∇∇ᵀ)B`.
    hess: Option<DMatrix<f64>>,
}

fn element_state(el: &Element, values: &[f64], spec: &MetricSpec, with_hess: bool) -> Result<ElementState> {
    let xi: Vec<f64> = local_gradient(el, values);
    let (dual, ginv) = if with_hess {
        let (d, m) = legendre_with_metric(spec, &el.centroid, &xi)?;
        (d, Some(m))
    } else {
        (legendre_dual(spec, &el.centroid, &xi)?, None)
    };
    let e = dual.dual_norm_sq();
    let scale = el.weight * (0.5 * e).exp();
    let grad_v = DVector::from_column_slice(&dual.gradient);
    let grad = (el.b.transpose() * &grad_v * scale).iter().copied().collect();
    let hess = ginv.as_ref().map(|m| {
        let inner = m + &grad_v * grad_v.transpose();
        el.b.transpose() * inner * &el.b * scale
    });
    Ok(ElementState {
        energy: scale,
        e,
        dual: dual.gradient,
        grad,
        g_star: ginv,
        hess,
    })
}

fn local_gradient(el: &Element, values: &[f64]) -> Vec<f64> {
    let local = DVector::from_iterator(el.nodes.len(), el.nodes.iter().map(|&k| values[k]));
    (&el.b * local).iter().copied().collect()
}

/// Relative covector change below which `Δe` is taken from its quadratic expansion.
const TAYLOR_SWITCH: f64 = 1e-6;

/// `𝔼_h(u + δ) − 𝔼_h(u)` summed element by element, so that decreases far
/// below the rounding error of `𝔼_h` itself are resolved.
fn energy_change(
    els: &[Element],
    states: &[ElementState],
    values: &[f64],
    delta: &[f64],
    spec: &MetricSpec,
) -> Result<f64> {
    let parts: Vec<f64> = els
        .par_iter()
        .zip(states.par_iter())
        .map(|(el, st)| {
            let dxi = local_gradient(el, delta);
            let dmax = dxi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax == 0.0 {
                return Ok(0.0);
            }
            let xi = local_gradient(el, values);
            let xmax = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let de = match &st.g_star {
                Some(gs) if dmax <= TAYLOR_SWITCH * xmax => {
                    let d = DVector::from_column_slice(&dxi);
                    let lin: f64 = st.dual.iter().zip(&dxi).map(|(a, b)| a * b).sum();
                    2.0 * lin + d.dot(&(gs * &d))
                }
                _ => {
                    let moved: Vec<f64> = xi.iter().zip(&dxi).map(|(a, b)| a + b).collect();
                    legendre_dual(spec, &el.centroid, &moved)?.dual_norm_sq() - st.e
                }
            };
            Ok(st.energy * (0.5 * de).exp_m1())
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&parts))
}

fn element_states(
    els: &[Element],
    values: &[f64],
    spec: &MetricSpec,
    with_hess: bool,
) -> Result<Vec<ElementState>> {
    els.par_iter()
        .map(|el| element_state(el, values, spec, with_hess))
        .collect()
}

fn energy_of(els: &[Element], values: &[f64], spec: &MetricSpec) -> Result<f64> {
    let parts: Vec<f64> = els
        .par_iter()
        .map(|el| element_state(el, values, spec, false).map(|s| s.energy))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&parts))
}

/// Fixed-shape tree reduction, independent of thread count.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn discrete_energy(field: &ScalarField, spec: &MetricSpec) -> Result<f64> {
    energy_of(&elements(&field.domain, spec), &field.values, spec)
}

/// `𝔼_h` and its exact derivative in each interior nodal value (zero on the boundary).
pub fn discrete_energy_and_gradient(field: &ScalarField, spec: &MetricSpec) -> Result<(f64, Vec<f64>)> {
    let els = elements(&field.domain, spec);
    let states = element_states(&els, &field.values, spec, false)?;
    Ok(assemble_gradient(&field.domain, &els, &states, &field.values))
}


/// Energy, gradient, and the gross flux `Σ_T |∂𝔼_T/∂u_k|` through each node.
/// Rounding-error multiple tolerated in a nodal gradient before it counts as residual.
const ROUNDOFF_FACTOR: f64 = 64.0;

/// Energy, nodal gradient, gross flux `Σ_T |∂𝔼_T/∂u_k|`, and the rounding
/// floor of the gradient (flux the element gradients would carry if each
/// were perturbed by `ε·Σ_b |B_{db}||u_b|`).
fn assemble_with_gross(
    domain: &GridDomain,
    els: &[Element],
    states: &[ElementState],
    values: &[f64],
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let energies: Vec<f64> = states.iter().map(|s| s.energy).collect();
    let mut grad = vec![0.0; domain.len()];
    let mut gross = vec![0.0; domain.len()];
    let mut floor = vec![0.0; domain.len()];
    for (el, st) in els.iter().zip(states) {
        let spread: Vec<f64> = (0..el.b.nrows())
            .map(|d| el.nodes.iter().enumerate().map(|(b, &k)| (el.b[(d, b)] * values[k]).abs()).sum())
            .collect();
        for (a, &k) in el.nodes.iter().enumerate() {
            grad[k] += st.grad[a];
            gross[k] += st.grad[a].abs();
            let reach: f64 = spread.iter().enumerate().map(|(d, s)| el.b[(d, a)].abs() * s).sum();
            floor[k] += st.energy * reach;
        }
    }
    for (k, g) in grad.iter_mut().enumerate() {
        if domain.is_boundary(k) {
            *g = 0.0;
        }
    }
    (pairwise_sum(&energies), grad, gross, floor)
}

fn assemble_gradient(domain: &GridDomain, els: &[Element], states: &[ElementState], values: &[f64]) -> (f64, Vec<f64>) {
    let (e, g, _, _) = assemble_with_gross(domain, els, states, values);
    (e, g)
}

/// `max_k (|∂𝔼_h/∂u_k| − 64ε·floor_k)⁺ / (gross flux at k)` over interior nodes.
///
/// The absolute gradient cannot fall below `ε·e^{e/2}|∇|/h`, which is large
/// where the energy density is; the ratio removes that scale. Where the field
/// is nearly constant the nodal differences themselves carry rounding error
/// of order `ε|u|`, and the floor discounts it.
fn relative_residual(domain: &GridDomain, grad: &[f64], gross: &[f64], floor: &[f64]) -> f64 {
    (0..domain.len())
        .filter(|&k| !domain.is_boundary(k))
        .map(|k| {
            let excess = grad[k].abs() - ROUNDOFF_FACTOR * f64::EPSILON * floor[k];
            if excess <= 0.0 { 0.0 } else { excess / gross[k] }
        })
        .fold(0.0, f64::max)
}

/// Relative nodal residual of `field` (see [`SolverConfig::tol`]).
pub fn residual_norm(field: &ScalarField, spec: &MetricSpec) -> Result<f64> {
    let els = elements(&field.domain, spec);
    let states = element_states(&els, &field.values, spec, false)?;
    let (_, g, gross, floor) = assemble_with_gross(&field.domain, &els, &states, &field.values);
    Ok(relative_residual(&field.domain, &g, &gross, &floor))
}

/// Row-major numbering of interior nodes.
struct InteriorMap {
    to_node: Vec<usize>,
    to_unknown: Vec<Option<usize>>,
    bandwidth: usize,
}

impl InteriorMap {
    fn new(domain: &GridDomain) -> Self {
        let mut to_node = Vec::new();
        let mut to_unknown = vec![None; domain.len()];
        for k in 0..domain.len() {
            if !domain.is_boundary(k) {
                to_unknown[k] = Some(to_node.len());
                to_node.push(k);
            }
        }
        let bandwidth = if domain.dim() == 1 { 1 } else { domain.nx() - 2 + 1 };
        Self {
            to_node,
            to_unknown,
            bandwidth,
        }
    }
}

/// Symmetric banded matrix stored by lower diagonals: `band[i][d] = A[i][i-d]`.
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    /// Adds to `A[i][j]` for `j ≤ i`.
    pub(crate) fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.band[i * (self.bw + 1) + (i - j)] += v;
    }

    fn at(&self, i: usize, d: usize) -> f64 {
        self.band[i * (self.bw + 1) + d]
    }

    /// In-place banded Cholesky; `false` when a pivot is not positive.
    pub(crate) fn factor(&mut self) -> bool {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut s = self.band[i * w + (i - j)];
                let kmin = lo.max(j.saturating_sub(self.bw));
                for k in kmin..j {
                    s -= self.band[i * w + (i - k)] * self.band[j * w + (j - k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return false;
                    }
                    self.band[i * w] = s.sqrt();
                } else {
                    self.band[i * w + (i - j)] = s / self.band[j * w];
                }
            }
        }
        true
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.at(i, i - k) * y[k];
            }
            y[i] = s / self.at(i, 0);
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.at(k, k - i) * y[k];
            }
            y[i] = s / self.at(i, 0);
        }
        y
    }
}

fn assemble_hessian(map: &InteriorMap, els: &[Element], states: &[ElementState]) -> BandMatrix {
    let mut m = BandMatrix::zeros(map.to_node.len(), map.bandwidth);
    for (el, st) in els.iter().zip(states) {
        let h = st.hess.as_ref().expect("hessian requested");
        for (a, &ka) in el.nodes.iter().enumerate() {
            let Some(ia) = map.to_unknown[ka] else { continue };
            for (b, &kb) in el.nodes.iter().enumerate() {
                let Some(ib) = map.to_unknown[kb] else { continue };
                if ib <= ia {
                    m.add_lower(ia, ib, h[(a, b)]);
                }
            }
        }
    }
    m
}

/// Transfinite (Coons) blend of the boundary values; linear in one dimension.
fn coons(domain: &GridDomain, boundary: &[f64]) -> Vec<f64> {
    let (nx, ny) = (domain.nx(), domain.ny());
    let mut v = boundary.to_vec();
    if domain.dim() == 1 {
        let (a, b) = (boundary[0], boundary[nx - 1]);
        for (i, val) in v.iter_mut().enumerate() {
            let s = i as f64 / (nx - 1) as f64;
            *val = (1.0 - s) * a + s * b;
        }
        return v;
    }
    let at = |i: usize, j: usize| boundary[domain.index(i, j)];
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let s = i as f64 / (nx - 1) as f64;
            let t = j as f64 / (ny - 1) as f64;
            let edges = (1.0 - s) * at(0, j) + s * at(nx - 1, j) + (1.0 - t) * at(i, 0) + t * at(i, ny - 1);
            let corners = (1.0 - s) * (1.0 - t) * at(0, 0)
                + s * (1.0 - t) * at(nx - 1, 0)
                + (1.0 - s) * t * at(0, ny - 1)
                + s * t * at(nx - 1, ny - 1);
            v[domain.index(i, j)] = edges - corners;
        }
    }
    v
}

/// Solution together with the energy of every accepted iterate.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub field: ScalarField,
    pub energies: Vec<f64>,
}

fn spec_digest(spec: &MetricSpec) -> String {
    format!("{:016x}", fnv1a(format!("{spec:?}").as_bytes()))
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x100000001b3)
    })
}

pub fn solve_dirichlet(
    domain: &GridDomain,
    boundary: &BoundaryData,
    spec: &MetricSpec,
    config: &SolverConfig,
) -> Result<ScalarField> {
    Ok(solve_dirichlet_traced(domain, boundary, spec, config)?.field)
}

const MAX_HALVINGS: usize = 60;

/// Damped Newton with the exact element Hessian and a backtracking line
/// search; gradient steps with Barzilai–Borwein length when the Newton
/// system cannot be factored.
pub fn solve_dirichlet_traced(
    domain: &GridDomain,
    boundary: &BoundaryData,
    spec: &MetricSpec,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    if domain.dim() != spec.dim() {
        return Err(FinslerError::InvalidGrid(format!(
            "grid dimension {} differs from metric dimension {}",
            domain.dim(),
            spec.dim()
        )));
    }
    let bvals: Vec<f64> = (0..domain.len())
        .map(|k| if domain.is_boundary(k) { boundary.value(domain, k) } else { 0.0 })
        .collect();
    if bvals.iter().any(|v| !v.is_finite()) {
        return Err(FinslerError::config("boundary", "boundary data must be finite"));
    }
    let els = elements(domain, spec);
    let map = InteriorMap::new(domain);
    let cell: f64 = domain.spacing().iter().product();
    let mut values = coons(domain, &bvals);
    let mut energies = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    let finish = |values: Vec<f64>, iterations: usize, energy: f64, residual: f64| {
        let mut f = ScalarField::new(domain.clone(), values).expect("length matches");
        f.metadata.spec_hash = spec_digest(spec);
        f.metadata.iterations = iterations;
        f.metadata.energy = energy;
        f.metadata.residual_norm = residual;
        f
    };

    // tracked through accurate per-step changes, so the recorded sequence is monotone
    let mut energy = f64::NAN;
    for it in 0..=config.max_iter {
        let states = element_states(&els, &values, spec, true)?;
        let (fresh, grad, gross, floor) = assemble_with_gross(domain, &els, &states, &values);
        if it == 0 {
            energy = fresh;
        }
        energies.push(energy);
        let residual = relative_residual(domain, &grad, &gross, &floor);
        if residual <= config.tol || map.to_node.is_empty() {
            return Ok(SolveOutcome {
                field: finish(values, it, energy, residual),
                energies,
            });
        }
        if it == config.max_iter {
            return Err(FinslerError::MaxIterationsExceeded {
                iterations: it,
                gradient_norm: residual,
                best: Box::new(finish(values, it, energy, residual)),
            });
        }
        let g_int: Vec<f64> = map.to_node.iter().map(|&k| grad[k]).collect();
        let mut hess = assemble_hessian(&map, &els, &states);
        let newton = hess.factor();
        let dir: Vec<f64> = if newton {
            hess.solve(&g_int).iter().map(|v| -v).collect()
        } else {
            let alpha = match &prev {
                Some((s, y)) => {
                    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
                    let ss: f64 = s.iter().map(|a| a * a).sum();
                    if sy > 0.0 { ss / sy } else { 1.0 / cell }
                }
                None => 1.0 / cell,
            };
            g_int.iter().map(|g| -alpha * g).collect()
        };
        let slope: f64 = dir.iter().zip(&g_int).map(|(d, g)| d * g).sum();
        let dmax = dir.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut delta = vec![0.0; values.len()];
            for (a, &k) in map.to_node.iter().enumerate() {
                delta[k] = t * dir[a];
            }
            let change = energy_change(&els, &states, &values, &delta, spec)?;
            if change <= config.armijo * t * slope && change <= 0.0 {
                let trial = values.iter().zip(&delta).map(|(v, d)| v + d).collect::<Vec<f64>>();
                accepted = Some((trial, change));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, change)) => {
                energy += change;
                let s: Vec<f64> = dir.iter().map(|d| t * d).collect();
                let old = g_int;
                values = trial;
                if !newton || prev.is_some() {
                    let g_new = {
                        let st = element_states(&els, &values, spec, false)?;
                        assemble_gradient(domain, &els, &st, &values).1
                    };
                    let y: Vec<f64> = map.to_node.iter().zip(&old).map(|(&k, o)| g_new[k] - o).collect();
                    prev = Some((s, y));
                } else {
                    prev = Some((s, vec![0.0; old.len()]));
                }
            }
            // energy is flat to roundoff along a step shorter than step_tol
            None if dmax <= config.step_tol => {
                return Ok(SolveOutcome {
                    field: finish(values, it, energy, residual),
                    energies,
                });
            }
            None => {
                return Err(FinslerError::LineSearchStall {
                    iteration: it,
                    gradient_norm: residual,
                });
            }
        }
    }
    unreachable!("loop returns at max_iter")
}

/// Five-point (three-point in 1-D) harmonic extension of the boundary values.
pub fn harmonic_solve(domain: &GridDomain, boundary: &BoundaryData) -> Result<ScalarField> {
    let map = InteriorMap::new(domain);
    let h = domain.spacing();
    let mut values: Vec<f64> = (0..domain.len())
        .map(|k| if domain.is_boundary(k) { boundary.value(domain, k) } else { 0.0 })
        .collect();
    let mut m = BandMatrix::zeros(map.to_node.len(), map.bandwidth);
    let mut rhs = vec![0.0; map.to_node.len()];
    for (row, &k) in map.to_node.iter().enumerate() {
        let (i, j) = domain.coords(k);
        let mut nbrs = vec![(domain.index(i - 1, j), h[0]), (domain.index(i + 1, j), h[0])];
        if domain.dim() == 2 {
            nbrs.push((domain.index(i, j - 1), h[1]));
            nbrs.push((domain.index(i, j + 1), h[1]));
        }
        for (nb, hd) in nbrs {
            let w = 1.0 / (hd * hd);
            m.add_lower(row, row, w);
            match map.to_unknown[nb] {
                Some(col) if col < row => m.add_lower(row, col, -w),
                Some(_) => {}
                None => rhs[row] += w * values[nb],
            }
        }
    }
    if !m.factor() {
        return Err(FinslerError::InvalidGrid("discrete Laplacian is singular".into()));
    }
    for (row, v) in m.solve(&rhs).into_iter().enumerate() {
        values[map.to_node[row]] = v;
    }
    ScalarField::new(domain.clone(), values)
}

/// Local quartic least-squares fit on the 5×5 (5-point in 1-D) stencil
/// centred at node `k`; the node must be at least two layers deep.
pub fn fitted_field_jet(field: &ScalarField, k: usize) -> Result<FieldJet> {
    let d = &field.domain;
    if d.depth(k) < 2 {
        return Err(FinslerError::InvalidGrid(format!("node {k} is too close to the boundary")));
    }
    let (ci, cj) = d.coords(k);
    let h = d.spacing();
    let x = d.point(k);
    if d.dim() == 1 {
        // quartic through five points: exact stencil derivatives
        let u = |o: isize| field.values[(ci as isize + o) as usize];
        let hh = h[0];
        let d1 = (u(-2) - 8.0 * u(-1) + 8.0 * u(1) - u(2)) / (12.0 * hh);
        let d2 = (-u(-2) + 16.0 * u(-1) - 30.0 * u(0) + 16.0 * u(1) - u(2)) / (12.0 * hh * hh);
        let d3 = (-u(-2) + 2.0 * u(-1) - 2.0 * u(1) + u(2)) / (2.0 * hh.powi(3));
        return Ok(FieldJet::new(x, u(0), vec![d1], DMatrix::from_element(1, 1, d2))
            .with_d3u(Tensor3::from_fn(1, |_, _, _| d3)));
    }
    // monomials s^p t^q with p + q ≤ 4 in scaled offsets s = dx/h, t = dy/h
    let powers: Vec<(i32, i32)> = (0..=4).flat_map(|tot| (0..=tot).map(move |q| (tot - q, q))).collect();
    let mut a = DMatrix::zeros(25, powers.len());
    let mut b = DVector::zeros(25);
    let mut row = 0;
    for oj in -2i32..=2 {
        for oi in -2i32..=2 {
            for (c, &(p, q)) in powers.iter().enumerate() {
                a[(row, c)] = (oi as f64).powi(p) * (oj as f64).powi(q);
            }
            b[row] = field.values[d.index((ci as i32 + oi) as usize, (cj as i32 + oj) as usize)];
            row += 1;
        }
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| FinslerError::InvalidGrid(e.to_string()))?;
    let get = |p: i32, q: i32| -> f64 {
        let idx = powers.iter().position(|&m| m == (p, q)).expect("monomial in basis");
        let fact = |m: i32| (1..=m).product::<i32>() as f64;
        coef[idx] * fact(p) * fact(q) / h[0].powi(p) / h[1].powi(q)
    };
    let du = vec![get(1, 0), get(0, 1)];
    let d2u = DMatrix::from_row_slice(2, 2, &[get(2, 0), get(1, 1), get(1, 1), get(0, 2)]);
    let d3u = Tensor3::from_fn(2, |i, j, l| {
        let p = [i, j, l].iter().filter(|&&v| v == 0).count() as i32;
        get(p, 3 - p)
    });
    Ok(FieldJet::new(x, coef[0], du, d2u).with_d3u(d3u))
}

/// Values of `H = (a² − r²)² e(u) / (b² − u²)` on the forward ball `B_a(x0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HFunction {
    /// `None` outside the ball.
    pub values: Vec<Option<f64>>,
    pub argmax: usize,
    pub max: f64,
}

pub fn h_function(field: &ScalarField, spec: &MetricSpec, x0: &[f64], a: f64, b: f64) -> Result<HFunction> {
    let d = &field.domain;
    let b2 = b * b;
    let mut values = vec![None; d.len()];
    let mut sup_u2: f64 = 0.0;
    let mut radii = vec![f64::INFINITY; d.len()];
    for k in 0..d.len() {
        let r = forward_distance(spec, x0, &d.point(k))?;
        if r <= a {
            radii[k] = r;
            sup_u2 = sup_u2.max(field.values[k].powi(2));
        }
    }
    if !(b2 > sup_u2) {
        return Err(FinslerError::BoundTooSmall { b2, sup_u2 });
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..d.len() {
        let r = radii[k];
        if !r.is_finite() {
            continue;
        }
        let x = d.point(k);
        let e = legendre_dual(spec, &x, &field.nodal_gradient(k))?.dual_norm_sq();
        let hval = (a * a - r * r).powi(2) * e / (b2 - field.values[k].powi(2));
        values[k] = Some(hval);
        if hval > best.0 {
            best = (hval, k);
        }
    }
    Ok(HFunction {
        values,
        argmax: best.1,
        max: best.0.max(0.0),
    })
}

/// `a^{3.5} + a² + 1`.
pub fn estimate_scale(a: f64) -> f64 {
    a.powf(3.5) + a * a + 1.0
}

/// `b² = 2M²(1 + 4a²) + 1`, with `M` the bound of `|u|`.
pub fn choose_bound(m: f64, a: f64) -> f64 {
    (2.0 * m * m * (1.0 + 4.0 * a * a) + 1.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    /// `(node, H)` over the ball.
    pub lhs: Vec<(usize, f64)>,
    /// `C·(a^{3.5} + a² + 1)` for the supplied `C`.
    pub bound: f64,
    /// Smallest `C` for which the estimate holds on the grid.
    pub empirical_c: f64,
    pub passes: bool,
    /// `bound − max H`.
    pub margin: f64,
}

pub fn gradient_estimate_check(
    field: &ScalarField,
    spec: &MetricSpec,
    x0: &[f64],
    a: f64,
    b: f64,
    c: f64,
) -> Result<GradientEstimate> {
    let h = h_function(field, spec, x0, a, b)?;
    let lhs: Vec<(usize, f64)> = h
        .values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
    let scale = estimate_scale(a);
    let bound = c * scale;
    Ok(GradientEstimate {
        lhs,
        bound,
        empirical_c: h.max / scale,
        passes: h.max <= bound,
        margin: bound - h.max,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleConfig {
    /// Nodes per axis; odd so that `x0` is a grid node.
    pub resolution: usize,
    /// Constant `C` of the gradient estimate used for `bound_value`.
    pub c: f64,
    pub solver: SolverConfig,
}

impl Default for LiouvilleConfig {
    fn default() -> Self {
        Self {
            resolution: 129,
            c: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleRecord {
    pub radius: f64,
    pub b: f64,
    pub max_h: f64,
    pub center_energy: f64,
    /// `C·(a^{3.5} + a² + 1)`.
    pub bound_value: f64,
    pub empirical_c: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug)]
pub struct LiouvilleOutcome {
    pub records: Vec<LiouvilleRecord>,
    /// Hypothesis violations found while sampling curvature; not fatal.
    pub warnings: Vec<FinslerError>,
    pub fields: Vec<ScalarField>,
}

/// Boundary data of oscillation `2m` on the box `x0 + [-a, a]^n`.
pub fn liouville_boundary(x0: &[f64], a: f64, m: f64) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x: &[f64]| {
        let s = std::f64::consts::PI * (x[0] - x0[0]) / (2.0 * a);
        let mut v = m * s.sin();
        if x.len() > 1 {
            v *= (std::f64::consts::PI * (x[1] - x0[1]) / (4.0 * a)).cos();
        }
        v
    }
}

fn sample_hypothesis(spec: &MetricSpec, x0: &[f64], a: f64) -> Result<Vec<FinslerError>> {
    let n = spec.dim();
    let mut warnings = Vec::new();
    let dirs: Vec<Vec<f64>> = (0..4)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / 2.0 + 0.3;
            if n == 1 {
                vec![if k % 2 == 0 { 1.0 } else { -1.0 }]
            } else {
                let mut v = vec![0.0; n];
                v[0] = t.cos();
                v[1] = t.sin();
                v
            }
        })
        .collect();
    for off in [-0.5, 0.0, 0.5] {
        let mut x = x0.to_vec();
        x[0] += off * a;
        for y in &dirs {
            for w in &dirs {
                let r = mixed_weighted_ricci(spec, &x, y, w, Weight::Infinite)?;
                if !WeightedRicci::Value(-1e-6).le(&r) {
                    warnings.push(FinslerError::CurvatureHypothesisViolated(format!(
                        "mixed Ric^inf = {r} at x = {x:?}"
                    )));
                }
            }
        }
    }
    Ok(warnings)
}

/// Solve on boxes `x0 + [-a, a]^n` for each radius and record the
/// gradient-estimate statistics on the inscribed ball.
pub fn liouville_experiment(
    spec: &MetricSpec,
    x0: &[f64],
    radii: &[f64],
    m: f64,
    config: &LiouvilleConfig,
) -> Result<LiouvilleOutcome> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(FinslerError::config("liouville.radii", "radii must be positive and increasing"));
    }
    if config.resolution % 2 == 0 || config.resolution < 9 {
        return Err(FinslerError::config("liouville.resolution", "must be odd and at least 9"));
    }
    let n = spec.dim();
    let largest = radii[radii.len() - 1];
    let boxed = |a: f64| -> Result<MetricSpec> {
        spec.clone().with_chart(ChartBox::new(
            x0.iter().map(|c| c - a).collect(),
            x0.iter().map(|c| c + a).collect(),
        )?)
    };
    let warnings = sample_hypothesis(&boxed(largest)?, x0, largest)?;
    let runs: Vec<Result<(LiouvilleRecord, ScalarField)>> = radii
        .par_iter()
        .map(|&a| {
            let local = boxed(a)?;
            let domain = GridDomain::new(
                x0.iter().map(|c| c - a).collect(),
                x0.iter().map(|c| c + a).collect(),
                vec![config.resolution; n],
            )?;
            let g = liouville_boundary(x0, a, m);
            let data = BoundaryData::Nodal(ScalarField::from_fn(domain.clone(), &g));
            let field = solve_dirichlet(&domain, &data, &local, &config.solver)?;
            let b = choose_bound(m, a);
            let est = gradient_estimate_check(&field, &local, x0, a, b, config.c)?;
            let centre = domain.nearest(x0);
            let center_energy = legendre_dual(&local, x0, &field.nodal_gradient(centre))?.dual_norm_sq();
            Ok((
                LiouvilleRecord {
                    radius: a,
                    b,
                    max_h: est.empirical_c * estimate_scale(a),
                    center_energy,
                    bound_value: est.bound,
                    empirical_c: est.empirical_c,
                    iterations: field.metadata.iterations,
                    residual: field.metadata.residual_norm,
                },
                field,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(radii.len());
    let mut fields = Vec::with_capacity(radii.len());
    for r in runs {
        let (rec, f) = r?;
        records.push(rec);
        fields.push(f);
    }
    Ok(LiouvilleOutcome {
        records,
        warnings,
        fields,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if y.iter().any(|v| *v == 0.0) {
        // decay to an exact zero at the largest radius only
        let (last, rest) = y.split_last().expect("nonempty");
        return if *last == 0.0 && rest.iter().all(|v| *v > 0.0) { f64::NEG_INFINITY } else { f64::NAN };
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_cholesky_matches_dense_solve() {
        let n = 12;
        let bw = 3;
        let mut dense = DMatrix::zeros(n, n);
        let mut band = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = if i == j { 10.0 + i as f64 } else { 1.0 / (1.0 + (i + j) as f64) };
                dense[(i, j)] = v;
                dense[(j, i)] = v;
                band.add_lower(i, j, v);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        assert!(band.factor());
        let x = band.solve(&rhs);
        let expect = dense.lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn coons_reproduces_bilinear_data() {
        let d = GridDomain::square(0.0, 1.0, 9).unwrap();
        let f = |p: &[f64]| 1.0 + 2.0 * p[0] - p[1] + 3.0 * p[0] * p[1];
        let b: Vec<f64> = (0..d.len()).map(|k| f(&d.point(k))).collect();
        let v = coons(&d, &b);
        for k in 0..d.len() {
            assert!((v[k] - f(&d.point(k))).abs() < 1e-14);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((log_log_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
