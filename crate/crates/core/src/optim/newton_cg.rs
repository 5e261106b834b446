//! Truncated Newton method with an inner conjugate-gradient solve and
//! Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonCgConfig {
    pub max_outer: usize,
    /// Inner CG iteration cap; defaults to the problem dimension when zero.
    pub max_inner: usize,
    pub grad_tol: f64,
}

impl Default for NewtonCgConfig {
    fn default() -> Self {
        Self {
            max_outer: 20,
            max_inner: 0,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonCgReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub outer_iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Model of a smooth objective: value (None on evaluation failure) and a
/// gradient/Hessian pair at a point.
pub trait NewtonModel {
    fn value(&mut self, x: &[f64]) -> Option<f64>;
    fn gradient_hessian(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>;
}

/// Steihaug-style CG on `H d = −g`, stopping at negative curvature or when
/// the residual drops below `tol`.
fn truncated_cg(g: &DVector<f64>, h: &DMatrix<f64>, tol: f64, max_inner: usize) -> DVector<f64> {
    let n = g.len();
    let mut d = DVector::zeros(n);
    let mut r = -g.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_inner {
        if rr.sqrt() <= tol {
            break;
        }
        let hp = h * &p;
        let curv = p.dot(&hp);
        if curv <= 1e-14 * p.dot(&p) * h.norm().max(1e-300) {
            if d.iter().all(|v| *v == 0.0) {
                return -g.clone();
            }
            break;
        }
        let a = rr / curv;
        d += &p * a;
        r -= &hp * a;
        let rr_next = r.dot(&r);
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    d
}

/// Minimizes the model from `x0`. Trial points whose evaluation fails are
/// treated as +∞ and the step is shortened; the result never has a larger
/// value than the start.
pub fn newton_cg<M: NewtonModel>(model: &mut M, x0: &[f64], config: &NewtonCgConfig) -> NewtonCgReport {
    let n = x0.len();
    let max_inner = if config.max_inner == 0 { n.max(1) } else { config.max_inner };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = model.value(x0).unwrap_or(f64::INFINITY);
    let mut trace = vec![fx];
    let mut outer = 0;
    while outer < config.max_outer && fx.is_finite() {
        let Some((g, h)) = model.gradient_hessian(x.as_slice()) else {
            break;
        };
        let gnorm = g.norm();
        if !(gnorm > config.grad_tol) {
            break;
        }
        outer += 1;
        let forcing = gnorm.min(1e-6) * gnorm;
        let mut d = truncated_cg(&g, &h, forcing, max_inner);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            d = -g.clone();
            slope = -gnorm * gnorm;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x + &d * t;
            let ft = model.value(trial.as_slice()).unwrap_or(f64::INFINITY);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(fx);
    }
    NewtonCgReport {
        x: x.as_slice().to_vec(),
        value: fx,
        outer_iterations: outer,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl NewtonModel for Quadratic {
        fn value(&mut self, x: &[f64]) -> Option<f64> {
            let x = DVector::from_column_slice(x);
            Some(0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x))
        }
        fn gradient_hessian(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
            let x = DVector::from_column_slice(x);
            Some((&self.a * &x - &self.b, self.a.clone()))
        }
    }

    #[test]
    fn quadratic_solved_in_one_step() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let b = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let exact = a.clone().lu().solve(&b).unwrap();
        let mut q = Quadratic { a, b };
        let r = newton_cg(&mut q, &[0.0, 0.0, 0.0], &NewtonCgConfig::default());
        assert!(r.outer_iterations <= 3);
        for (xi, ei) in r.x.iter().zip(exact.iter()) {
            assert!((xi - ei).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_start_unchanged() {
        let mut q = Quadratic {
            a: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
        };
        let r = newton_cg(&mut q, &[0.0, 0.0], &NewtonCgConfig::default());
        assert_eq!(r.x, vec![0.0, 0.0]);
        assert_eq!(r.outer_iterations, 0);
    }

    #[test]
    fn failed_evaluations_force_backtracking() {
        struct Walled;
        impl NewtonModel for Walled {
            fn value(&mut self, x: &[f64]) -> Option<f64> {
                (x[0] < 0.9).then(|| (x[0] - 2.0).powi(2))
            }
            fn gradient_hessian(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
                Some((DVector::from_element(1, 2.0 * (x[0] - 2.0)), DMatrix::from_element(1, 1, 2.0)))
            }
        }
        let r = newton_cg(&mut Walled, &[0.0], &NewtonCgConfig::default());
        assert!(r.x[0] < 0.9 && r.x[0] > 0.5);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
