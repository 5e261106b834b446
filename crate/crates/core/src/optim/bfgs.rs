//! Box-constrained BFGS with numerical gradients.
//!
//! Iterates live in unit-box coordinates so the initial inverse Hessian
//! (identity) is scaled consistently across dimensions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sanitize, OptimResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsConfig {
    pub max_iters: usize,
    /// Central-difference step as a fraction of each bound's span.
    pub fd_step: f64,
    /// Stop when a step moves less than this in unit-box coordinates.
    pub step_tol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            fd_step: 1e-4,
            step_tol: 1e-10,
        }
    }
}

struct Scaled<'a, F> {
    objective: F,
    bounds: &'a [(f64, f64)],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Scaled<'_, F> {
    fn to_x(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter()
            .zip(self.bounds)
            .map(|(ui, (lo, hi))| lo + ui.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn eval(&mut self, u: &DVector<f64>) -> f64 {
        self.evaluations += 1;
        let x = self.to_x(u);
        sanitize((self.objective)(&x))
    }

    /// Central differences, falling back to one-sided at the box faces.
    fn gradient(&mut self, u: &DVector<f64>, h: f64) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(u.len());
        for i in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] = (u[i] + h).min(1.0);
            dn[i] = (u[i] - h).max(0.0);
            let span = up[i] - dn[i];
            if span <= 0.0 {
                continue;
            }
            let fu = self.eval(&up);
            let fd = self.eval(&dn);
            let gi = (fu - fd) / span;
            if !gi.is_finite() {
                return None;
            }
            g[i] = gi;
        }
        Some(g)
    }
}

fn project(u: &DVector<f64>) -> DVector<f64> {
    u.map(|v| v.clamp(0.0, 1.0))
}

/// Quasi-Newton descent from `start`; the returned value never exceeds the
/// value at `start`.
pub fn bfgs_refine<F>(objective: F, start: &[f64], bounds: &[(f64, f64)], config: &BfgsConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if start.len() != bounds.len() || start.is_empty() {
        return Err(Error::Precondition("BFGS start and bounds differ in dimension".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Precondition("BFGS bounds must be finite with lo <= hi".into()));
    }
    if start
        .iter()
        .zip(bounds)
        .any(|(x, (lo, hi))| !(*lo..=*hi).contains(x))
    {
        return Err(Error::Precondition("BFGS start lies outside the bounds".into()));
    }
    let mut s = Scaled {
        objective,
        bounds,
        evaluations: 0,
    };
    let n = start.len();
    let mut u = DVector::from_iterator(
        n,
        start.iter().zip(bounds).map(|(x, (lo, hi))| {
            if hi > lo {
                (x - lo) / (hi - lo)
            } else {
                0.0
            }
        }),
    );
    let mut fu = s.eval(&u);
    let start_result = |evaluations| OptimResult {
        x: start.to_vec(),
        value: fu,
        evaluations,
        failed: true,
    };
    let Some(mut g) = s.gradient(&u, config.fd_step) else {
        return Ok(start_result(s.evaluations));
    };
    if !fu.is_finite() {
        return Ok(start_result(s.evaluations));
    }
    let mut hinv = DMatrix::<f64>::identity(n, n);
    for _ in 0..config.max_iters {
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = project(&(&u + &dir * t));
            let step = &trial - &u;
            let slope = g.dot(&step);
            if step.norm() < config.step_tol {
                break;
            }
            let ft = s.eval(&trial);
            if slope < 0.0 && ft <= fu + 1e-4 * slope {
                accepted = Some((trial, ft));
                break;
            }
            if slope >= 0.0 && ft < fu {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            break;
        };
        let step = &next - &u;
        let Some(gnext) = s.gradient(&next, config.fd_step) else {
            u = next;
            fu = fnext;
            break;
        };
        let y = &gnext - &g;
        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - (&step * y.transpose()) * rho;
            let right = &eye - (&y * step.transpose()) * rho;
            hinv = &left * &hinv * &right + (&step * step.transpose()) * rho;
        }
        let moved = step.norm();
        u = next;
        fu = fnext;
        g = gnext;
        if moved < config.step_tol {
            break;
        }
    }
    Ok(OptimResult {
        x: s.to_x(&u),
        value: fu,
        evaluations: s.evaluations,
        failed: false,
    })
}
