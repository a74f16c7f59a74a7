use thiserror::Error;

use crate::grid::ScalarField;

pub type Result<T, E = FinslerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FinslerError {
    #[error("fiber vector must be nonzero")]
    ZeroFiberVector,
    #[error("metric is not strongly convex: {0}")]
    NotStronglyConvex(String),
    #[error("fundamental tensor is not positive definite at x = {x:?}, y = {y:?}")]
    SingularMetric { x: Vec<f64>, y: Vec<f64> },
    #[error("Legendre transform did not converge for covector {xi:?}")]
    LegendreNoConvergence { xi: Vec<f64> },
    #[error("path left the chart box at t = {t}")]
    LeftChart { t: f64 },
    #[error("weight k = {k} must be at least the dimension {n}")]
    InvalidK { k: f64, n: usize },
    #[error("measure density must be positive, got {0}")]
    NonpositiveDensity(f64),
    #[error("argument outside the domain: {0}")]
    DomainError(String),
    #[error("distance function is not smooth at the sample: {0}")]
    NonSmoothDistance(String),
    #[error("reference vector vanishes (du = 0)")]
    ZeroGradientReference,
    #[error("variation is nonzero on the boundary collar at node {node}")]
    SupportViolation { node: usize },
    #[error("function is not exponentially harmonic here: |Δ̂u| = {residual:e} > {gate:e}")]
    NotExpHarmonicAt { residual: f64, gate: f64 },
    #[error("solver hit the iteration limit ({iterations}); gradient norm {gradient_norm:e}")]
    MaxIterationsExceeded {
        iterations: usize,
        gradient_norm: f64,
        best: Box<ScalarField>,
    },
    #[error("line search stalled at iteration {iteration}; gradient norm {gradient_norm:e}")]
    LineSearchStall { iteration: usize, gradient_norm: f64 },
    #[error("b^2 = {b2} must exceed sup u^2 = {sup_u2} on the ball")]
    BoundTooSmall { b2: f64, sup_u2: f64 },
    #[error("curvature hypothesis violated: {0}")]
    CurvatureHypothesisViolated(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cannot parse expression `{expr}` at {pos}: {msg}")]
    ExprParse { expr: String, pos: usize, msg: String },
    #[error("config error in `{field}`: {msg}")]
    ConfigParse { field: String, msg: String },
    #[error("bad points row at line {line}: {msg}")]
    BadPointsRow { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FinslerError {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        FinslerError::ConfigParse {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
