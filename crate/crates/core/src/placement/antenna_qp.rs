//! Budget-coupled antenna subproblem.
//!
//! Minimizes `Σ (b_l − t_l)²` subject to `Σ b_l ≤ budget` and
//! `1 ≤ b_l ≤ upper`. The solution is `b_l = clip(t_l − ν, 1, upper)` with
//! the smallest `ν ≥ 0` that meets the budget; `ν` is located exactly on the
//! piecewise-linear sum by sorting its breakpoints.

use crate::error::{Error, Result};

fn clipped_sum(targets: &[f64], nu: f64, upper: f64) -> f64 {
    targets.iter().map(|t| (t - nu).clamp(1.0, upper)).sum()
}

/// Returns the allocation and the budget multiplier `ν`.
pub fn solve_antenna_qp(targets: &[f64], budget: f64, upper: f64) -> Result<(Vec<f64>, f64)> {
    let l = targets.len() as f64;
    if targets.is_empty() || !(budget >= l) {
        return Err(Error::Config(format!(
            "antenna budget {budget} cannot give {} APs one antenna each",
            targets.len()
        )));
    }
    if !(upper >= 1.0) || targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("antenna bounds and targets must be finite with upper >= 1".into()));
    }
    let alloc = |nu: f64| targets.iter().map(|t| (t - nu).clamp(1.0, upper)).collect::<Vec<_>>();
    if clipped_sum(targets, 0.0, upper) <= budget {
        return Ok((alloc(0.0), 0.0));
    }
    // The sum is nonincreasing in ν with kinks at t − upper and t − 1.
    let mut knots: Vec<f64> = targets
        .iter()
        .flat_map(|t| [t - upper, t - 1.0])
        .filter(|k| *k > 0.0)
        .collect();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut lo = 0.0;
    let mut s_lo = clipped_sum(targets, lo, upper);
    for &k in &knots[1..] {
        let s_k = clipped_sum(targets, k, upper);
        if s_k <= budget {
            let nu = if s_lo > s_k {
                lo + (s_lo - budget) * (k - lo) / (s_lo - s_k)
            } else {
                k
            };
            return Ok((alloc(nu), nu));
        }
        lo = k;
        s_lo = s_k;
    }
    // Every coordinate sits at the lower bound; only possible when budget == L.
    Ok((vec![1.0; targets.len()], lo))
}
