//! Structured nodal grids on box charts (one or two dimensions).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};
use crate::expr::Expr;

pub const FIELD_SCHEMA_VERSION: u32 = 1;

/// Box `[lo, hi]` with `resolution[d]` nodes along axis `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl GridDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > 2 || hi.len() != n || resolution.len() != n {
            return Err(FinslerError::InvalidGrid(
                "grids are one- or two-dimensional with matching bounds".into(),
            ));
        }
        if resolution.iter().any(|&r| r < 9) {
            return Err(FinslerError::InvalidGrid("resolution must be at least 9 per axis".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h - l > 0.0)) {
            return Err(FinslerError::InvalidGrid("degenerate bounds".into()));
        }
        Ok(Self { lo, hi, resolution })
    }

    pub fn square(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![lo, lo], vec![hi, hi], vec![nodes, nodes])
    }

    pub fn interval(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![nodes])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nx(&self) -> usize {
        self.resolution[0]
    }

    pub fn ny(&self) -> usize {
        self.resolution.get(1).copied().unwrap_or(1)
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|d| (self.hi[d] - self.lo[d]) / (self.resolution[d] - 1) as f64)
            .collect()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let (i, j) = self.coords(idx);
        let h = self.spacing();
        let mut p = vec![self.lo[0] + i as f64 * h[0]];
        if self.dim() == 2 {
            p.push(self.lo[1] + j as f64 * h[1]);
        }
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.coords(idx);
        let on_x = i == 0 || i + 1 == self.nx();
        if self.dim() == 1 {
            return on_x;
        }
        on_x || j == 0 || j + 1 == self.ny()
    }

    /// Distance (in nodes) to the nearest boundary node.
    pub fn depth(&self, idx: usize) -> usize {
        let (i, j) = self.coords(idx);
        let dx = i.min(self.nx() - 1 - i);
        if self.dim() == 1 {
            return dx;
        }
        dx.min(j.min(self.ny() - 1 - j))
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Node closest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let i = (((x[0] - self.lo[0]) / h[0]).round().max(0.0) as usize).min(self.nx() - 1);
        let j = if self.dim() == 2 {
            (((x[1] - self.lo[1]) / h[1]).round().max(0.0) as usize).min(self.ny() - 1)
        } else {
            0
        };
        self.index(i, j)
    }

    /// Same box with `factor`-times refined spacing.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.lo.clone(),
            self.hi.clone(),
            self.resolution.iter().map(|r| (r - 1) * factor + 1).collect(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub spec_hash: String,
    pub iterations: usize,
    pub energy: f64,
    pub residual_norm: f64,
}

/// Nodal values of a function on a [`GridDomain`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub domain: GridDomain,
    pub values: Vec<f64>,
    pub metadata: FieldMetadata,
}

impl ScalarField {
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(FinslerError::InvalidGrid(format!(
                "expected {} values, got {}",
                domain.len(),
                values.len()
            )));
        }
        Ok(Self {
            domain,
            values,
            metadata: FieldMetadata::default(),
        })
    }

    pub fn from_fn(domain: GridDomain, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.len()).map(|k| f(&domain.point(k))).collect();
        Self {
            domain,
            values,
            metadata: FieldMetadata::default(),
        }
    }

    pub fn from_expr(domain: GridDomain, expr: &Expr) -> Self {
        Self::from_fn(domain, |p| expr.eval_f64(p))
    }

    pub fn zeros(domain: GridDomain) -> Self {
        Self::from_fn(domain, |_| 0.0)
    }

    /// Second-order finite-difference gradient at a node (one-sided on the boundary).
    pub fn nodal_gradient(&self, idx: usize) -> Vec<f64> {
        let d = &self.domain;
        let (i, j) = d.coords(idx);
        let h = d.spacing();
        let axis = |pos: usize, count: usize, at: &dyn Fn(usize) -> f64, h: f64| -> f64 {
            if pos == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if pos + 1 == count {
                (3.0 * at(pos) - 4.0 * at(pos - 1) + at(pos - 2)) / (2.0 * h)
            } else {
                (at(pos + 1) - at(pos - 1)) / (2.0 * h)
            }
        };
        let mut g = vec![axis(i, d.nx(), &|k| self.values[d.index(k, j)], h[0])];
        if d.dim() == 2 {
            g.push(axis(j, d.ny(), &|k| self.values[d.index(i, k)], h[1]));
        }
        g
    }

    /// Central second derivatives at an interior node.
    pub fn nodal_hessian(&self, idx: usize) -> Vec<Vec<f64>> {
        let d = &self.domain;
        let (i, j) = d.coords(idx);
        let h = d.spacing();
        let u = |a: isize, b: isize| {
            self.values[d.index((i as isize + a) as usize, (j as isize + b) as usize)]
        };
        let uxx = (u(1, 0) - 2.0 * u(0, 0) + u(-1, 0)) / (h[0] * h[0]);
        if d.dim() == 1 {
            return vec![vec![uxx]];
        }
        let uyy = (u(0, 1) - 2.0 * u(0, 0) + u(0, -1)) / (h[1] * h[1]);
        let uxy = (u(1, 1) - u(1, -1) - u(-1, 1) + u(-1, -1)) / (4.0 * h[0] * h[1]);
        vec![vec![uxx, uxy], vec![uxy, uyy]]
    }

    pub fn boundary_min_max(&self) -> (f64, f64) {
        (0..self.values.len())
            .filter(|&k| self.domain.is_boundary(k))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                (lo.min(self.values[k]), hi.max(self.values[k]))
            })
    }

    /// CSV layout: a `schema_version` line, a header line
    /// `nx,ny,x_lo,x_hi,y_lo,y_hi` with its values, then `ny` rows of `nx` values.
    pub fn to_csv(&self) -> String {
        let d = &self.domain;
        let mut s = String::new();
        let _ = writeln!(s, "schema_version,{FIELD_SCHEMA_VERSION}");
        let _ = writeln!(s, "nx,ny,x_lo,x_hi,y_lo,y_hi");
        let (ylo, yhi) = if d.dim() == 2 { (d.lo[1], d.hi[1]) } else { (0.0, 0.0) };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            d.nx(),
            if d.dim() == 2 { d.ny() } else { 1 },
            fmt_f64(d.lo[0]),
            fmt_f64(d.hi[0]),
            fmt_f64(ylo),
            fmt_f64(yhi)
        );
        for j in 0..d.ny() {
            let row: Vec<String> = (0..d.nx())
                .map(|i| fmt_f64(self.values[d.index(i, j)]))
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| FinslerError::BadPointsRow {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty field file"))?;
        if first.trim() != format!("schema_version,{FIELD_SCHEMA_VERSION}") {
            return Err(bad(1, "unsupported schema_version"));
        }
        lines.next();
        let (ln, header) = lines.next().ok_or_else(|| bad(3, "missing grid header"))?;
        let h: Vec<&str> = header.split(',').map(str::trim).collect();
        if h.len() != 6 {
            return Err(bad(ln + 1, "expected 6 header values"));
        }
        let nx: usize = h[0].parse().map_err(|_| bad(ln + 1, "bad nx"))?;
        let ny: usize = h[1].parse().map_err(|_| bad(ln + 1, "bad ny"))?;
        let nums: Vec<f64> = h[2..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(ln + 1, "bad bounds"))?;
        let domain = if ny == 1 {
            GridDomain::interval(nums[0], nums[1], nx)?
        } else {
            GridDomain::new(vec![nums[0], nums[2]], vec![nums[1], nums[3]], vec![nx, ny])?
        };
        let mut values = Vec::with_capacity(nx * ny);
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            for v in line.split(',') {
                values.push(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(ln + 1, "bad nodal value"))?,
                );
            }
        }
        ScalarField::new(domain, values)
    }
}

/// Shortest round-trip decimal form, switching to exponent notation for
/// very small or large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_validation() {
        assert!(GridDomain::square(0.0, 1.0, 8).is_err());
        assert!(GridDomain::square(1.0, 1.0, 9).is_err());
        assert!(GridDomain::new(vec![0.0; 3], vec![1.0; 3], vec![9; 3]).is_err());
        let d = GridDomain::square(0.0, 1.0, 9).unwrap();
        assert_eq!(d.len(), 81);
        assert!(d.is_boundary(0));
        assert!(!d.is_boundary(d.index(4, 4)));
        assert_eq!(d.point(d.index(8, 4)), vec![1.0, 0.5]);
        assert_eq!(d.nearest(&[0.49, 0.51]), d.index(4, 4));
    }

    #[test]
    fn quadratic_gradient_and_hessian_exact() {
        let d = GridDomain::square(-1.0, 1.0, 11).unwrap();
        let f = ScalarField::from_fn(d.clone(), |p| p[0] * p[0] - 3.0 * p[0] * p[1] + p[1]);
        for k in [0, 5, d.index(3, 7), d.len() - 1] {
            let p = d.point(k);
            let g = f.nodal_gradient(k);
            assert!((g[0] - (2.0 * p[0] - 3.0 * p[1])).abs() < 1e-12);
            assert!((g[1] - (-3.0 * p[0] + 1.0)).abs() < 1e-12);
        }
        let hs = f.nodal_hessian(d.index(5, 5));
        assert!((hs[0][0] - 2.0).abs() < 1e-10);
        assert!((hs[0][1] + 3.0).abs() < 1e-10);
        assert!(hs[1][1].abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = GridDomain::square(-0.5, 1.5, 9).unwrap();
        let f = ScalarField::from_fn(d, |p| (p[0] * 3.1).sin() * 1e-7 + p[1] / 3.0);
        let back = ScalarField::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.domain, f.domain);
        let d1 = GridDomain::interval(0.0, 1.0, 9).unwrap();
        let f1 = ScalarField::from_fn(d1, |p| p[0].exp());
        assert_eq!(ScalarField::from_csv(&f1.to_csv()).unwrap().values, f1.values);
    }
}
