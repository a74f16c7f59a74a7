//! Points files for `tensors`: one `(x, Y, W)` triple per row, `3n` numbers.
//!
//! Blank lines and lines starting with `#` are skipped. A first row that does
//! not start with a number is taken as a header.

use finsler_core::{FinslerError, MetricSpec, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PointRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn parse_points(text: &str, n: usize) -> Result<Vec<PointRow>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let looks_numeric = trimmed
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'));
        if !seen_data && !looks_numeric {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let vals = trimmed
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| FinslerError::BadPointsRow {
                line,
                msg: e.to_string(),
            })?;
        if vals.len() != 3 * n {
            return Err(FinslerError::BadPointsRow {
                line,
                msg: format!("expected {} values (x, Y, W), found {}", 3 * n, vals.len()),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FinslerError::BadPointsRow {
                line,
                msg: "non-finite value".into(),
            });
        }
        let row = PointRow {
            x: vals[..n].to_vec(),
            y: vals[n..2 * n].to_vec(),
            w: vals[2 * n..].to_vec(),
        };
        if row.y.iter().all(|v| *v == 0.0) || row.w.iter().all(|v| *v == 0.0) {
            return Err(FinslerError::BadPointsRow {
                line,
                msg: "Y and W must be nonzero".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `count` rows with `x` in the middle 80% of the chart and directions uniform on the unit ball.
pub fn random_points(spec: &MetricSpec, count: usize, seed: u64) -> Vec<PointRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = spec.chart();
    let n = spec.dim();
    let dir = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v;
        }
    };
    (0..count)
        .map(|_| {
            let x = (0..n)
                .map(|i| {
                    let mid = 0.5 * (chart.lo[i] + chart.hi[i]);
                    let half = 0.4 * (chart.hi[i] - chart.lo[i]);
                    mid + rng.gen_range(-half..half)
                })
                .collect();
            let y = dir(&mut rng);
            let w = dir(&mut rng);
            PointRow { x, y, w }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_and_rows() {
        let text = "# sample\nx1,x2,y1,y2,w1,w2\n0,0,1,0,0,1\n\n0.1,0.2,1,1,-1,0.5\n";
        let rows = parse_points(text, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].w, vec![-1.0, 0.5]);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let err = parse_points("0,0,1,0,0,1\n0,0,1\n", 2).unwrap_err();
        assert!(matches!(err, FinslerError::BadPointsRow { line: 2, .. }));
        let err = parse_points("0,0,1,0,0,1\n0,0,1,zero,0,1\n", 2).unwrap_err();
        assert!(matches!(err, FinslerError::BadPointsRow { line: 2, .. }));
        let err = parse_points("\n\n0,0,0,0,0,1\n", 2).unwrap_err();
        assert!(matches!(err, FinslerError::BadPointsRow { line: 3, .. }));
    }

    #[test]
    fn random_points_are_seeded() {
        let spec = MetricSpec::euclidean(2);
        assert_eq!(random_points(&spec, 5, 3), random_points(&spec, 5, 3));
        assert_ne!(random_points(&spec, 5, 3), random_points(&spec, 5, 4));
        assert!(random_points(&spec, 50, 1).iter().all(|p| spec.chart().contains(&p.x)));
    }
}
