//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 7                      # optional, default 0
//!
//! [metric]
//! family = "randers"            # euclidean | riemannian | randers | conformal | sphere | hyperbolic
//! dim = 2
//! a = [["1", "0"], ["0", "1"]]  # riemannian, randers, conformal over riemannian/randers
//! b = ["0.3", "0.1*x2"]         # randers
//! phi = "0.2*x1"                # conformal
//! base = "euclidean"            # conformal: euclidean | riemannian | randers
//!
//! [measure]
//! kind = "gaussian"             # lebesgue | gaussian | density | riemannian_volume
//! kappa = 1.0                   # gaussian
//! density = "exp(-x1^2)"        # density
//!
//! [chart]
//! half_width = 2.0              # or lo = [...], hi = [...]
//! ```
//!
//! The remaining tables (`[solver]`, `[grid]`, `[liouville]`, `[geodesic]`,
//! `[tensors]`, `[validate]`) are optional and only read by the command that
//! needs them. Unknown keys are rejected.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::curvature::Weight;
use crate::error::{FinslerError, Result};
use crate::expr::Expr;
use crate::grid::GridDomain;
use crate::metric::{ChartBox, Family, MatrixExpr, Measure, MetricSpec};
use crate::solver::{BoundaryData, LiouvilleConfig, SolverConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub family: String,
    pub dim: usize,
    #[serde(default)]
    pub a: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub b: Option<Vec<String>>,
    #[serde(default)]
    pub phi: Option<String>,
    #[serde(default)]
    pub base: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub kind: String,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub density: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    pub half_width: Option<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

/// Dirichlet problem for `solve`: a box grid and boundary expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
    pub boundary: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleSection {
    pub x0: Vec<f64>,
    pub radii: Vec<f64>,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    LiouvilleConfig::default().resolution
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSection {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    1e-2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorsSection {
    /// Points file (rows `x, Y, W`), relative to the config file.
    pub points: Option<String>,
    /// Random rows drawn from `seed` when no points file is given.
    pub random_points: usize,
    /// Finite weights and `inf`.
    pub weights: Vec<f64>,
    pub misalignment_resolution: usize,
}

impl Default for TensorsSection {
    fn default() -> Self {
        Self {
            points: None,
            random_points: 10,
            weights: vec![f64::INFINITY],
            misalignment_resolution: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub samples: usize,
    pub misalignment_resolution: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            samples: 20,
            misalignment_resolution: 16,
        }
    }
}

/// A parsed and validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub spec: MetricSpec,
    /// Known constant flag curvature of the `euclidean`, `sphere` and `hyperbolic` families.
    pub constant_curvature: Option<f64>,
    pub solver: SolverConfig,
    pub grid: Option<GridSection>,
    pub liouville: Option<LiouvilleSection>,
    pub geodesic: Option<GeodesicSection>,
    pub tensors: TensorsSection,
    pub validate: ValidateSection,
}

fn section<T: DeserializeOwned>(root: &toml::Table, name: &str) -> Result<Option<T>> {
    match root.get(name) {
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| FinslerError::config(name, e.message().trim())),
    }
}

fn required<T: DeserializeOwned>(root: &toml::Table, name: &str) -> Result<T> {
    section(root, name)?.ok_or_else(|| FinslerError::config(name, "missing table"))
}

const TABLES: [&str; 11] = [
    "schema_version",
    "seed",
    "metric",
    "measure",
    "chart",
    "solver",
    "grid",
    "liouville",
    "geodesic",
    "tensors",
    "validate",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| FinslerError::config("toml", e.message().trim()))?;
        if let Some(key) = root.keys().find(|k| !TABLES.contains(&k.as_str())) {
            return Err(FinslerError::config(key, "unknown key"));
        }
        match root.get("schema_version").map(|v| v.as_integer()) {
            Some(Some(v)) if v == CONFIG_SCHEMA_VERSION as i64 => {}
            Some(_) => {
                return Err(FinslerError::config(
                    "schema_version",
                    &format!("expected {CONFIG_SCHEMA_VERSION}"),
                ))
            }
            None => return Err(FinslerError::config("schema_version", "missing")),
        }
        let seed = match root.get("seed") {
            None => 0,
            Some(v) => v
                .as_integer()
                .filter(|s| *s >= 0)
                .ok_or_else(|| FinslerError::config("seed", "must be a nonnegative integer"))?
                as u64,
        };
        let metric: MetricSection = required(&root, "metric")?;
        let measure: Option<MeasureSection> = section(&root, "measure")?;
        let chart: ChartSection = section(&root, "chart")?.unwrap_or_default();
        let spec = build_spec(&metric, measure.as_ref(), &chart)?;
        let solver: SolverConfig = section(&root, "solver")?.unwrap_or_default();
        solver.validate()?;
        let constant_curvature = match metric.family.as_str() {
            "euclidean" => Some(0.0),
            "sphere" => Some(1.0),
            "hyperbolic" => Some(-1.0),
            _ => None,
        };
        let cfg = RunConfig {
            seed,
            constant_curvature,
            solver,
            grid: section(&root, "grid")?,
            liouville: section(&root, "liouville")?,
            geodesic: section(&root, "geodesic")?,
            tensors: section(&root, "tensors")?.unwrap_or_default(),
            validate: section(&root, "validate")?.unwrap_or_default(),
            spec,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        let n = self.spec.dim();
        let dim_ok = |field: &str, v: &[f64]| {
            if v.len() == n && v.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(FinslerError::config(field, &format!("expected {n} finite entries")))
            }
        };
        if let Some(g) = &self.grid {
            dim_ok("grid.lo", &g.lo)?;
            dim_ok("grid.hi", &g.hi)?;
            if g.resolution.len() != n {
                return Err(FinslerError::config("grid.resolution", &format!("expected {n} entries")));
            }
            Expr::parse(&g.boundary).map_err(|e| FinslerError::config("grid.boundary", &e.to_string()))?;
        }
        if let Some(l) = &self.liouville {
            dim_ok("liouville.x0", &l.x0)?;
            if l.radii.is_empty() || l.radii.iter().any(|r| !(*r > 0.0)) {
                return Err(FinslerError::config("liouville.radii", "radii must be positive"));
            }
            if l.radii.windows(2).any(|w| w[1] <= w[0]) {
                return Err(FinslerError::config("liouville.radii", "radii must be strictly increasing"));
            }
            if !(l.m >= 0.0) || !l.m.is_finite() {
                return Err(FinslerError::config("liouville.m", "must be finite and nonnegative"));
            }
            if l.resolution < 9 || l.resolution % 2 == 0 {
                return Err(FinslerError::config("liouville.resolution", "must be odd and at least 9"));
            }
            if !(l.c >= 0.0) {
                return Err(FinslerError::config("liouville.c", "must be nonnegative"));
            }
        }
        if let Some(g) = &self.geodesic {
            dim_ok("geodesic.x0", &g.x0)?;
            dim_ok("geodesic.y0", &g.y0)?;
            if !(g.step > 0.0) || !g.t_max.is_finite() {
                return Err(FinslerError::config("geodesic", "step must be positive and t_max finite"));
            }
        }
        if self.tensors.weights.iter().any(|k| k.is_nan()) {
            return Err(FinslerError::config("tensors.weights", "NaN weight"));
        }
        if self.tensors.misalignment_resolution < 16 || self.validate.misalignment_resolution < 16 {
            return Err(FinslerError::config("misalignment_resolution", "must be at least 16"));
        }
        Ok(())
    }

    /// Grid and boundary data of the `[grid]` table.
    pub fn dirichlet_problem(&self) -> Result<(GridDomain, BoundaryData)> {
        let g = self.grid.as_ref().ok_or_else(|| FinslerError::config("grid", "missing table"))?;
        let domain = GridDomain::new(g.lo.clone(), g.hi.clone(), g.resolution.clone())?;
        Ok((domain, BoundaryData::Expr(Expr::parse(&g.boundary)?)))
    }

    pub fn liouville_config(&self) -> Result<(LiouvilleSection, LiouvilleConfig)> {
        let l = self
            .liouville
            .clone()
            .ok_or_else(|| FinslerError::config("liouville", "missing table"))?;
        let cfg = LiouvilleConfig {
            resolution: l.resolution,
            c: l.c,
            solver: self.solver.clone(),
        };
        Ok((l, cfg))
    }

    pub fn weights(&self) -> Vec<Weight> {
        self.tensors
            .weights
            .iter()
            .map(|&k| if k.is_infinite() { Weight::Infinite } else { Weight::Finite(k) })
            .collect()
    }
}

fn parse_expr(field: &str, s: &str) -> Result<Expr> {
    Expr::parse(s).map_err(|e| FinslerError::config(field, &e.to_string()))
}

fn matrix(m: &MetricSection) -> Result<MatrixExpr> {
    let a = m.a.as_ref().ok_or_else(|| FinslerError::config("metric.a", "required by this family"))?;
    if a.len() != m.dim || a.iter().any(|row| row.len() != m.dim) {
        return Err(FinslerError::config("metric.a", &format!("expected a {0}x{0} matrix", m.dim)));
    }
    a.iter()
        .map(|row| row.iter().map(|s| parse_expr("metric.a", s)).collect())
        .collect()
}

fn family(name: &str, m: &MetricSection) -> Result<Family> {
    match name {
        "euclidean" => Ok(Family::Euclidean),
        "riemannian" => Ok(Family::Riemannian { a: matrix(m)? }),
        "randers" => {
            let b = m.b.as_ref().ok_or_else(|| FinslerError::config("metric.b", "required by randers"))?;
            if b.len() != m.dim {
                return Err(FinslerError::config("metric.b", &format!("expected {} entries", m.dim)));
            }
            let b = b.iter().map(|s| parse_expr("metric.b", s)).collect::<Result<_>>()?;
            Ok(Family::Randers { a: matrix(m)?, b })
        }
        other => Err(FinslerError::config("metric.family", &format!("unknown family {other:?}"))),
    }
}

fn build_spec(m: &MetricSection, measure: Option<&MeasureSection>, chart: &ChartSection) -> Result<MetricSpec> {
    if m.dim == 0 {
        return Err(FinslerError::config("metric.dim", "must be positive"));
    }
    let n = m.dim;
    let chart = match (chart.half_width, &chart.lo, &chart.hi) {
        (Some(w), None, None) if w > 0.0 => Some(ChartBox::cube(n, w)),
        (None, Some(lo), Some(hi)) => Some(
            ChartBox::new(lo.clone(), hi.clone()).map_err(|e| FinslerError::config("chart", &e.to_string()))?,
        ),
        (None, None, None) => None,
        _ => return Err(FinslerError::config("chart", "give either half_width > 0 or both lo and hi")),
    };
    let base = match m.family.as_str() {
        "sphere" => MetricSpec::sphere_chart(n),
        "hyperbolic" => MetricSpec::hyperbolic_chart(n),
        "conformal" => {
            let phi = m.phi.as_deref().ok_or_else(|| FinslerError::config("metric.phi", "required by conformal"))?;
            let inner = family(m.base.as_deref().unwrap_or("euclidean"), m)?;
            let fam = Family::Conformal {
                base: Box::new(inner),
                phi: parse_expr("metric.phi", phi)?,
            };
            MetricSpec::new(fam, n, Measure::Lebesgue, chart.clone().unwrap_or_else(|| ChartBox::cube(n, 1.0)))?
        }
        name => MetricSpec::new(family(name, m)?, n, Measure::Lebesgue, chart.clone().unwrap_or_else(|| ChartBox::cube(n, 1.0)))?,
    };
    let spec = match chart {
        Some(c) if &c != base.chart() => base.with_chart(c)?,
        _ => base,
    };
    let Some(ms) = measure else {
        return Ok(spec);
    };
    match ms.kind.as_str() {
        "lebesgue" => Ok(spec),
        "gaussian" => spec.with_measure(Measure::gaussian_scaled(n, ms.kappa.unwrap_or(1.0))),
        "density" => {
            let d = ms
                .density
                .as_deref()
                .ok_or_else(|| FinslerError::config("measure.density", "required by kind = \"density\""))?;
            spec.with_measure(Measure::Density(parse_expr("measure.density", d)?))
        }
        "riemannian_volume" => spec.with_riemannian_volume(),
        other => Err(FinslerError::config("measure.kind", &format!("unknown measure {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "schema_version = 1\n[metric]\nfamily = \"euclidean\"\ndim = 2\n";

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.spec, MetricSpec::euclidean(2));
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn errors_name_the_field() {
        let field_of = |text: &str| match RunConfig::parse(text) {
            Err(FinslerError::ConfigParse { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field_of("[metric]\nfamily = \"euclidean\"\ndim = 2\n"), "schema_version");
        assert_eq!(field_of(&format!("{BASE}[solver]\ntoll = 1.0\n")), "solver");
        assert_eq!(
            field_of(&format!("{BASE}[liouville]\nx0 = [0.0, 0.0]\nradii = [4.0, 2.0]\n")),
            "liouville.radii"
        );
        assert_eq!(field_of(&format!("{BASE}[grid]\nlo=[0.0]\nhi=[1.0,1.0]\nresolution=[5,5]\nboundary=\"x1\"\n")), "grid.lo");
        assert_eq!(field_of("schema_version = 1\n[metric]\nfamily = \"finsler\"\ndim = 2\n"), "metric.family");
        assert_eq!(field_of(&format!("extra = 1\n{BASE}")), "extra");
        assert_eq!(field_of(&format!("{BASE}extra = 1\n")), "metric");
    }

    #[test]
    fn randers_with_gaussian_measure() {
        let text = "schema_version = 1\n[metric]\nfamily = \"randers\"\ndim = 2\n\
                    a = [[\"1\", \"0\"], [\"0\", \"1\"]]\nb = [\"0.3\", \"0\"]\n\
                    [measure]\nkind = \"gaussian\"\n[chart]\nhalf_width = 2.0\n";
        let c = RunConfig::parse(text).unwrap();
        assert!(matches!(c.spec.family(), Family::Randers { .. }));
        assert_eq!(c.spec.chart(), &ChartBox::cube(2, 2.0));
        assert!((c.spec.density(&[1.0, 0.0]) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn infinite_weights_parse() {
        let c = RunConfig::parse(&format!("{BASE}[tensors]\nweights = [3.0, inf]\n")).unwrap();
        assert_eq!(c.weights(), vec![Weight::Finite(3.0), Weight::Infinite]);
    }
}
