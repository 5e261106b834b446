//! Range-only planar multilateration.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fix {
    pub position: [f64; 2],
    /// Sum of squared range residuals at `position`.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn range_ssr(anchors: &[[f64; 2]], ranges: &[f64], p: [f64; 2]) -> f64 {
    anchors
        .iter()
        .zip(ranges)
        .map(|(c, r)| {
            let d = (p[0] - c[0]).hypot(p[1] - c[1]);
            (d - r) * (d - r)
        })
        .sum()
}

pub fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

/// Least-squares position minimizing `Σ (‖t − c_l‖ − R_l)²` by damped
/// Gauss-Newton. Starts from the anchor centroid unless `start` is given.
pub fn multilaterate(
    anchors: &[[f64; 2]],
    ranges: &[f64],
    start: Option<[f64; 2]>,
    max_iters: usize,
) -> Result<Fix> {
    if anchors.len() != ranges.len() {
        return Err(Error::Precondition(format!(
            "{} anchors but {} ranges",
            anchors.len(),
            ranges.len()
        )));
    }
    if anchors.len() < 2 {
        return Err(Error::Precondition("multilateration needs at least 2 anchors".into()));
    }
    if !ranges.iter().all(|r| r.is_finite()) {
        return Err(Error::Domain("ranges must be finite".into()));
    }
    let mut p = start.unwrap_or_else(|| centroid(anchors));
    let mut cost = range_ssr(anchors, ranges, p);
    let mut mu = 1e-9;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (c, r) in anchors.iter().zip(ranges) {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let d = dx.hypot(dy);
            if d == 0.0 {
                continue;
            }
            let row = Vector2::new(dx / d, dy / d);
            jtj += row * row.transpose();
            jtr += row * (d - r);
        }
        if jtr.norm() <= 1e-12 * (1.0 + cost.sqrt()) {
            converged = true;
            break;
        }
        let scale = jtj.trace().max(1e-300);
        let mut accepted = false;
        for _ in 0..60 {
            let damped = jtj + Matrix2::identity() * (mu * scale);
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1]];
            let trial_cost = range_ssr(anchors, ranges, trial);
            if trial_cost <= cost {
                let moved = step.norm();
                p = trial;
                let gain = cost - trial_cost;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if moved <= 1e-12 * (1.0 + p[0].abs() + p[1].abs()) || gain <= 1e-16 * cost.max(1e-300) {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    Ok(Fix {
        position: p,
        ssr: cost,
        iterations,
        converged,
    })
}
