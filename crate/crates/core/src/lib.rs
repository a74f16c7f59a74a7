//! Numerical Finsler metric-measure geometry.
//!
//! The crate computes the fundamental and Cartan tensors, Chern connection,
//! spray, flag and weighted Ricci curvatures, S-curvature and the
//! non-Riemannian tensors of parametric Finsler metrics, and implements the
//! exponentially harmonic operator `div_μ(exp(F*²(Du)/2) Du)` together with a
//! Dirichlet solver and expanding-ball gradient-estimate experiments.
//!
//! All derivatives of the metric come from truncated Taylor jets ([`jet`]), so
//! curvature quantities carry no finite-difference noise.

pub mod error;
pub mod expr;
pub mod jet;
pub mod metric;
pub mod tensor;
pub mod grid;
pub mod connection;
pub mod curvature;
pub mod operators;
pub mod solver;
pub mod config;

pub use error::{FinslerError, Result};
pub use config::RunConfig;
pub use metric::{ChartBox, Family, Measure, MetricSpec};
