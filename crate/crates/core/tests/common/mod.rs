#![allow(dead_code)]

use finsler_core::metric::MetricSpec;
use finsler_core::tensor::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the chart box shrunk by `shrink` toward its centre.
pub fn point(spec: &MetricSpec, rng: &mut ChaCha8Rng, shrink: f64) -> Vec<f64> {
    let c = spec.chart();
    (0..spec.dim())
        .map(|d| {
            let mid = 0.5 * (c.lo[d] + c.hi[d]);
            let half = 0.5 * (c.hi[d] - c.lo[d]) * shrink;
            rng.gen_range(mid - half..mid + half)
        })
        .collect()
}

/// Nonzero vector with entries in `[-1, 1]`.
pub fn direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() > 1e-2 {
            return v;
        }
    }
}

/// Randers metric on the flat plane with a position-dependent, non-closed drift.
pub fn randers_varying() -> MetricSpec {
    MetricSpec::randers(
        &[vec!["1 + 0.2*x2^2", "0.1*x1"], vec!["0.1*x1", "1"]],
        &["0.3 + 0.2*x2", "0.1*x1"],
    )
    .unwrap()
}

pub fn randers_constant() -> MetricSpec {
    MetricSpec::randers(&[vec!["1", "0"], vec!["0", "1"]], &["0.5", "0"]).unwrap()
}

/// Christoffel symbols of `a_ij(x)` from central differences of the coefficients.
pub fn christoffel_fd(spec: &MetricSpec, x: &[f64]) -> Tensor3 {
    let n = spec.dim();
    let h = 1e-5;
    let da: Vec<_> = (0..n)
        .map(|k| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += h;
            m[k] -= h;
            (spec.quadratic_form(&p).unwrap() - spec.quadratic_form(&m).unwrap()) / (2.0 * h)
        })
        .collect();
    let inv = spec.quadratic_form(x).unwrap().try_inverse().unwrap();
    Tensor3::from_fn(n, |i, j, k| {
        0.5 * (0..n)
            .map(|l| inv[(i, l)] * (da[k][(l, j)] + da[j][(l, k)] - da[l][(j, k)]))
            .sum::<f64>()
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}
