//! Subcommand drivers behind the `finsler` binary.
//!
//! Every command reads a [`RunConfig`], writes its CSV artifacts into the
//! output directory and finishes with `manifest.json`. CSV files begin with a
//! `schema_version,<v>` line followed by a header row; float columns use the
//! shortest round-trip decimal form, so equal runs give equal bytes.

pub mod points;
pub mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use finsler_core::curvature::curvature_report;
use finsler_core::connection::integrate_geodesic;
use finsler_core::grid::fmt_f64;
use finsler_core::solver::{fnv1a, liouville_experiment, log_log_slope, solve_dirichlet};
use finsler_core::{FinslerError, RunConfig};
use serde::Serialize;
use serde_json::{json, Value};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Tensors,
    Solve,
    Liouville,
    Validate,
    Geodesic,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Tensors => "tensors",
            Subcommand::Solve => "solve",
            Subcommand::Liouville => "liouville",
            Subcommand::Validate => "validate",
            Subcommand::Geodesic => "geodesic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Promote curvature-hypothesis warnings to failures.
    pub strict: bool,
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    /// Points file for `tensors`; overrides `[tensors] points`.
    pub points: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: out.into(),
            threads: None,
            strict: false,
            seed: None,
            points: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] FinslerError),
    #[error("{} warning(s) promoted by --strict: {}", .0.len(), .0.join("; "))]
    StrictWarnings(Vec<String>),
    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(FinslerError::Io(e))
    }
}

impl CliError {
    /// 2 invalid input, 3 numerical failure, 4 warning under `--strict`, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use FinslerError::*;
        match self {
            CliError::Core(ConfigParse { .. } | ExprParse { .. } | BadPointsRow { .. }) => 2,
            CliError::Core(NotStronglyConvex(_) | NonpositiveDensity(_) | InvalidK { .. } | InvalidGrid(_)) => 2,
            CliError::Core(Io(_)) | CliError::ThreadPool(_) => 1,
            CliError::Core(_) | CliError::ChecksFailed(_) => 3,
            CliError::StrictWarnings(_) => 4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub config_path: String,
    /// FNV-1a of the config file bytes.
    pub config_digest: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

struct Run {
    cfg: RunConfig,
    opts: RunOptions,
    seed: u64,
    outputs: Vec<String>,
    warnings: Vec<String>,
    summary: BTreeMap<String, Value>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.opts.out.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["schema_version".to_string(), CSV_SCHEMA_VERSION.to_string()]);
    w.flush().expect("in-memory writer");
    let mut text = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory writer");
    for r in rows {
        w.write_record(r).expect("in-memory writer");
    }
    text.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"));
    text
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn floats(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_f64(*x)).collect()
}

/// Run one subcommand; the manifest is also written to `<out>/manifest.json`.
pub fn run(cmd: Subcommand, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&opts.config)?;
    let cfg = RunConfig::parse(&text)?;
    std::fs::create_dir_all(&opts.out)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut run = Run {
        cfg,
        opts: opts.clone(),
        seed,
        outputs: Vec::new(),
        warnings: Vec::new(),
        summary: BTreeMap::new(),
    };
    let body = |run: &mut Run| -> Result<(), CliError> {
        match cmd {
            Subcommand::Tensors => cmd_tensors(run),
            Subcommand::Solve => cmd_solve(run),
            Subcommand::Liouville => cmd_liouville(run),
            Subcommand::Validate => cmd_validate(run),
            Subcommand::Geodesic => cmd_geodesic(run),
        }
    };
    let outcome = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?
            .install(|| body(&mut run)),
        None => body(&mut run),
    };
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        subcommand: cmd.name().to_string(),
        config_path: opts.config.display().to_string(),
        config_digest: format!("{:016x}", fnv1a(text.as_bytes())),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        threads: opts.threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: run.outputs,
        warnings: run.warnings.clone(),
        summary: run.summary,
    };
    if !manifest.outputs.is_empty() {
        std::fs::write(opts.out.join("manifest.json"), manifest.to_json())?;
    }
    outcome?;
    if opts.strict && !run.warnings.is_empty() {
        return Err(CliError::StrictWarnings(run.warnings));
    }
    Ok(manifest)
}

fn config_relative(config: &Path, file: &str) -> PathBuf {
    config.parent().map(|d| d.join(file)).unwrap_or_else(|| PathBuf::from(file))
}

fn cmd_tensors(run: &mut Run) -> Result<(), CliError> {
    let spec = &run.cfg.spec;
    let n = spec.dim();
    let source = run
        .opts
        .points
        .clone()
        .or_else(|| run.cfg.tensors.points.as_ref().map(|p| config_relative(&run.opts.config, p)));
    let rows = match &source {
        Some(path) => points::parse_points(&std::fs::read_to_string(path)?, n)?,
        None => points::random_points(spec, run.cfg.tensors.random_points, run.seed),
    };
    let weights = run.cfg.weights();
    let resolution = run.cfg.tensors.misalignment_resolution;
    let reports = rows
        .iter()
        .map(|p| curvature_report(spec, &p.x, &p.y, &p.w, &weights, resolution))
        .collect::<Result<Vec<_>, _>>()?;

    let mut header = [names("x", n), names("y", n), names("w", n)].concat();
    header.extend(["ricci", "s", "s_dot"].map(String::from));
    header.extend(weights.iter().map(|k| format!("wric_{k}")));
    header.extend(weights.iter().map(|k| format!("mixed_wric_{k}")));
    header.extend(names("t", n));
    header.extend(["t_dual_norm", "t_antisymmetry"].map(String::from));
    header.extend(names("u", n));
    header.extend(["u_norm", "divc_norm", "misalignment"].map(String::from));
    let table: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = [floats(&r.x), floats(&r.y), floats(&r.w)].concat();
            row.extend(floats(&[r.ricci, r.s_curv, r.s_dot]));
            row.extend(r.wric.iter().map(|(_, v)| v.to_string()));
            row.extend(r.mixed_wric.iter().map(|(_, v)| v.to_string()));
            row.extend(floats(&r.t_tensor));
            row.extend(floats(&[r.t_dual_norm, r.t_antisymmetry]));
            row.extend(floats(&r.u_vec));
            row.extend(floats(&[r.u_norm, r.div_c_norm, r.misalignment]));
            row
        })
        .collect();
    run.write("tensors.csv", &csv_text(&header, &table))?;
    let max = |f: &dyn Fn(&finsler_core::curvature::CurvatureReport) -> f64| {
        reports.iter().map(f).fold(0.0, f64::max)
    };
    let (ta, un, ma) = (
        max(&|r| r.t_antisymmetry.abs()),
        max(&|r| r.u_norm),
        max(&|r| r.misalignment),
    );
    run.put("rows", reports.len());
    run.put("max_t_antisymmetry", ta);
    run.put("max_u_norm", un);
    run.put("max_misalignment", ma);
    Ok(())
}

fn cmd_solve(run: &mut Run) -> Result<(), CliError> {
    let (domain, data) = run.cfg.dirichlet_problem()?;
    let field = match solve_dirichlet(&domain, &data, &run.cfg.spec, &run.cfg.solver) {
        Ok(f) => f,
        Err(FinslerError::MaxIterationsExceeded {
            iterations,
            gradient_norm,
            best,
        }) => {
            run.write("field.csv", &best.to_csv())?;
            run.put("iterations", iterations);
            run.put("residual_norm", gradient_norm);
            return Err(FinslerError::MaxIterationsExceeded {
                iterations,
                gradient_norm,
                best,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    run.write("field.csv", &field.to_csv())?;
    let m = &field.metadata;
    run.put("spec_hash", m.spec_hash.clone());
    run.put("iterations", m.iterations);
    run.put("energy", m.energy);
    run.put("residual_norm", m.residual_norm);
    Ok(())
}

fn cmd_liouville(run: &mut Run) -> Result<(), CliError> {
    let (section, cfg) = run.cfg.liouville_config()?;
    let out = liouville_experiment(&run.cfg.spec, &section.x0, &section.radii, section.m, &cfg)?;
    let header: Vec<String> = [
        "radius",
        "b",
        "max_h",
        "center_energy",
        "bound_value",
        "empirical_c",
        "iterations",
        "residual",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = out
        .records
        .iter()
        .map(|r| {
            let mut row = floats(&[r.radius, r.b, r.max_h, r.center_energy, r.bound_value, r.empirical_c]);
            row.push(r.iterations.to_string());
            row.push(fmt_f64(r.residual));
            row
        })
        .collect();
    run.write("liouville.csv", &csv_text(&header, &rows))?;
    run.warnings.extend(out.warnings.iter().map(|w| w.to_string()));
    if out.records.len() >= 3 {
        let tail = &out.records[out.records.len() - 3..];
        let radii: Vec<f64> = tail.iter().map(|r| r.radius).collect();
        let energies: Vec<f64> = tail.iter().map(|r| r.center_energy).collect();
        let slope = log_log_slope(&radii, &energies);
        // JSON has no infinities; an exact zero at the largest radius gives "-inf"
        let slope = if slope.is_finite() { json!(slope) } else { json!(fmt_f64(slope)) };
        run.put("decay_slope", slope);
    }
    run.put("records", json!(out.records));
    run.put("spec_hash", out.fields.first().map(|f| f.metadata.spec_hash.clone()).unwrap_or_default());
    Ok(())
}

fn cmd_validate(run: &mut Run) -> Result<(), CliError> {
    let checks = validate::run_checks(&run.cfg, run.seed)?;
    let header: Vec<String> = ["check", "status", "value", "tolerance"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.to_string(), c.status.as_str().to_string(), fmt_f64(c.value), fmt_f64(c.tolerance)])
        .collect();
    run.write("validate.csv", &csv_text(&header, &rows))?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.status == validate::Status::Fail)
        .map(|c| c.name.to_string())
        .collect();
    for c in checks.iter().filter(|c| c.status == validate::Status::Warn) {
        run.warnings.push(format!("{} = {}", c.name, fmt_f64(c.value)));
    }
    run.put("checks", checks.len());
    run.put("failed", failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

fn cmd_geodesic(run: &mut Run) -> Result<(), CliError> {
    let g = run
        .cfg
        .geodesic
        .clone()
        .ok_or_else(|| FinslerError::ConfigParse {
            field: "geodesic".into(),
            msg: "missing table".into(),
        })?;
    let path = integrate_geodesic(&run.cfg.spec, &g.x0, &g.y0, g.t_max, g.step)?;
    let n = run.cfg.spec.dim();
    let header = [vec!["t".to_string()], names("x", n), names("v", n)].concat();
    let rows: Vec<Vec<String>> = path
        .samples
        .iter()
        .map(|s| [vec![fmt_f64(s.t)], floats(&s.x), floats(&s.v)].concat())
        .collect();
    run.write("geodesic.csv", &csv_text(&header, &rows))?;
    run.put("samples", path.samples.len());
    run.put("step", path.step);
    run.put("speed_drift", path.drift);
    Ok(())
}
