use std::f64::consts::PI;

use super::{fundamental_tensor, MetricSpec};
use crate::error::{FinslerError, Result};

/// Point on the unit sphere from hyperspherical angles
/// (`θ_1..θ_{n-2} ∈ [0, π]`, last angle periodic).
pub(crate) fn hyperspherical(theta: &[f64]) -> Vec<f64> {
    let n = theta.len() + 1;
    let mut out = vec![0.0; n];
    let mut s = 1.0;
    for (i, t) in theta.iter().enumerate() {
        out[i] = s * t.cos();
        s *= t.sin();
    }
    out[n - 1] = s;
    out
}

/// Sampled and ascent-refined misalignment at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Misalignment {
    /// Best ratio over the sample grid; a certified lower bound.
    pub sampled: f64,
    /// Value after local ascent from the best sample.
    pub value: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

fn ratio(spec: &MetricSpec, x: &[f64], v: &[f64], w: &[f64], y: &[f64]) -> Result<f64> {
    let gv = fundamental_tensor(spec, x, v)?;
    let gw = fundamental_tensor(spec, x, w)?;
    Ok(gv.inner(y, y) / gw.inner(y, y))
}

fn angle_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return Vec::new();
    }
    let angles = n - 1;
    let total = resolution.pow(angles as u32);
    (0..total)
        .map(|mut idx| {
            (0..angles)
                .map(|a| {
                    let k = idx % resolution;
                    idx /= resolution;
                    if a + 1 == angles {
                        2.0 * PI * k as f64 / resolution as f64
                    } else {
                        PI * (k as f64 + 0.5) / resolution as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// `sup_{V,W,Y ∈ S_xM} g_V(Y,Y) / g_W(Y,Y)`.
///
/// The grid search factorises as `max_Y [max_V g_V(Y,Y)] / [min_W g_W(Y,Y)]`;
/// the best triple is then refined by a compass search on the angles.
pub fn misalignment(spec: &MetricSpec, x: &[f64], resolution: usize) -> Result<Misalignment> {
    let n = spec.dim();
    if resolution < 16 {
        return Err(FinslerError::DomainError(format!(
            "misalignment resolution {resolution} < 16"
        )));
    }
    if n == 1 {
        let dirs = [vec![1.0], vec![-1.0]];
        let gs: Vec<f64> = dirs
            .iter()
            .map(|d| fundamental_tensor(spec, x, d).map(|p| p.g[(0, 0)]))
            .collect::<Result<_>>()?;
        let (hi, lo) = if gs[0] >= gs[1] { (0, 1) } else { (1, 0) };
        let value = (gs[hi] / gs[lo]).max(1.0);
        return Ok(Misalignment {
            sampled: value,
            value,
            v: dirs[hi].clone(),
            w: dirs[lo].clone(),
            y: vec![1.0],
        });
    }
    let grid = angle_grid(n, resolution);
    let dirs: Vec<Vec<f64>> = grid.iter().map(|t| hyperspherical(t)).collect();
    let frames = dirs
        .iter()
        .map(|d| fundamental_tensor(spec, x, d))
        .collect::<Result<Vec<_>>>()?;

    let mut best = (f64::NEG_INFINITY, 0usize, 0usize, 0usize);
    for (iy, y) in dirs.iter().enumerate() {
        let mut hi = (f64::NEG_INFINITY, 0usize);
        let mut lo = (f64::INFINITY, 0usize);
        for (k, f) in frames.iter().enumerate() {
            let q = f.inner(y, y);
            if q > hi.0 {
                hi = (q, k);
            }
            if q < lo.0 {
                lo = (q, k);
            }
        }
        let r = hi.0 / lo.0;
        if r > best.0 {
            best = (r, hi.1, lo.1, iy);
        }
    }
    let sampled = best.0.max(1.0);

    // compass search over (θ_V, θ_W, θ_Y)
    let m = n - 1;
    let mut params: Vec<f64> = grid[best.1]
        .iter()
        .chain(&grid[best.2])
        .chain(&grid[best.3])
        .copied()
        .collect();
    let eval = |p: &[f64]| -> Result<f64> {
        let v = hyperspherical(&p[..m]);
        let w = hyperspherical(&p[m..2 * m]);
        let y = hyperspherical(&p[2 * m..]);
        ratio(spec, x, &v, &w, &y)
    };
    let mut current = eval(&params)?;
    let mut step = PI / resolution as f64;
    let mut iterations = 0;
    while step > 1e-9 && iterations < 20_000 {
        iterations += 1;
        let mut improved = false;
        for k in 0..params.len() {
            for sign in [1.0, -1.0] {
                let mut trial = params.clone();
                trial[k] += sign * step;
                let val = eval(&trial)?;
                if val > current {
                    current = val;
                    params = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let value = current.max(sampled);
    Ok(Misalignment {
        sampled,
        value,
        v: hyperspherical(&params[..m]),
        w: hyperspherical(&params[m..2 * m]),
        y: hyperspherical(&params[2 * m..]),
    })
}
