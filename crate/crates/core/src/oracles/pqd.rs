use serde::{Deserialize, Serialize};

use super::{Verdict, SIGMA_SLACK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqdCell {
    pub level_x: f64,
    pub level_sum: f64,
    pub joint: f64,
    pub product: f64,
    pub margin: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqdReport {
    pub samples: usize,
    pub cells: Vec<PqdCell>,
    pub violations: usize,
    /// Smallest `joint - product` over the grid.
    pub worst_margin: f64,
    /// Smallest `(joint - product) / tolerance`.
    pub worst_normalized: f64,
    pub verdict: Verdict,
}

/// `k` evenly spaced interior quantile levels, `i / (k + 1)`.
pub fn quantile_levels(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

/// Empirical check that `X` and `S = X + Y` are positive quadrant dependent.
///
/// For every pair of grid levels `(p, q)`, thresholds are the empirical
/// `p`-quantile of `X` and `q`-quantile of `S`; the cell is violated when
/// `P(X <= a, S <= b) < P(X <= a) P(S <= b) - 3 se`, where `se` is the
/// binomial standard error at the product probability.
pub fn pqd_empirical_check(x: &[f64], y: &[f64], grid: &[f64]) -> Result<PqdReport> {
    let m = x.len();
    if y.len() != m {
        return Err(Error::InvalidConfig(format!("sample lengths differ: {m} vs {}", y.len())));
    }
    if m < 2 {
        return Err(Error::InsufficientSamples { required: 2, found: m });
    }
    if grid.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidConfig("grid levels must lie in (0, 1)".into()));
    }
    let s: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let quantile = |sorted: &[f64], p: f64| sorted[((p * m as f64).ceil() as usize).clamp(1, m) - 1];
    let (sx, ss) = (sorted(x), sorted(&s));
    let ax: Vec<f64> = grid.iter().map(|&p| quantile(&sx, p)).collect();
    let bs: Vec<f64> = grid.iter().map(|&q| quantile(&ss, q)).collect();
    let mf = m as f64;
    let mut cells = Vec::with_capacity(grid.len() * grid.len());
    for (i, &a) in ax.iter().enumerate() {
        let below_a: Vec<bool> = x.iter().map(|v| *v <= a).collect();
        let px = below_a.iter().filter(|b| **b).count() as f64 / mf;
        for (j, &b) in bs.iter().enumerate() {
            let (mut joint, mut ps) = (0usize, 0usize);
            for (k, sv) in s.iter().enumerate() {
                if *sv <= b {
                    ps += 1;
                    joint += usize::from(below_a[k]);
                }
            }
            let joint = joint as f64 / mf;
            let product = px * (ps as f64 / mf);
            let tolerance = SIGMA_SLACK * (product * (1.0 - product) / mf).sqrt();
            cells.push(PqdCell { level_x: grid[i], level_sum: grid[j], joint, product, margin: joint - product, tolerance });
        }
    }
    let violations = cells.iter().filter(|c| c.margin < -c.tolerance).count();
    let worst_margin = cells.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let worst_normalized = cells
        .iter()
        .map(|c| if c.tolerance > 0.0 { c.margin / c.tolerance } else { f64::INFINITY })
        .fold(f64::INFINITY, f64::min);
    let verdict = if violations > 0 { Verdict::Fail } else { Verdict::Pass };
    Ok(PqdReport { samples: m, cells, violations, worst_margin, worst_normalized, verdict })
}
