//! Derivative-free and quasi-Newton solvers used by the estimators and the
//! placement optimizer.

pub mod abc;
pub mod bfgs;
pub mod newton_cg;

pub use abc::{abc_optimize, AbcConfig};
pub use bfgs::{bfgs_refine, BfgsConfig};
pub use newton_cg::{newton_cg, NewtonCgConfig, NewtonCgReport};

use serde::Serialize;

/// Best point found by a solver and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Set when the solver had to stop without a usable gradient.
    pub failed: bool,
}

pub(crate) fn clip(x: f64, (lo, hi): (f64, f64)) -> f64 {
    x.clamp(lo, hi)
}

/// Maps non-finite objective values to +∞ so comparisons stay total.
pub(crate) fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}
