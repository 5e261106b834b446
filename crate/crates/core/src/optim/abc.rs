//! Artificial bee colony minimizer over a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clip, sanitize, OptimResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbcConfig {
    /// Number of food sources (employed bees).
    pub popsize: usize,
    /// Stagnant trials before a scout abandons a source.
    pub epoch_limit: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            popsize: 20,
            epoch_limit: 10,
            max_iters: 50,
            seed: 0,
        }
    }
}

fn fitness(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else if v >= 0.0 {
        1.0 / (1.0 + v)
    } else {
        1.0 + v.abs()
    }
}

struct Colony<'f, F> {
    objective: &'f mut F,
    bounds: &'f [(f64, f64)],
    rng: ChaCha8Rng,
    sources: Vec<Vec<f64>>,
    values: Vec<f64>,
    trials: Vec<usize>,
    best: (Vec<f64>, f64),
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Colony<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = sanitize((self.objective)(x));
        if v < self.best.1 || self.best.0.is_empty() {
            self.best = (x.to_vec(), v);
        }
        v
    }

    fn random_point(&mut self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| if hi > lo { self.rng.random_range(lo..=hi) } else { lo })
            .collect()
    }

    /// Neighbor search around source `i`, kept only if it improves.
    fn explore(&mut self, i: usize) {
        let n = self.sources.len();
        let dim = self.rng.random_range(0..self.bounds.len());
        let k = if n > 1 {
            let k = self.rng.random_range(0..n - 1);
            if k >= i {
                k + 1
            } else {
                k
            }
        } else {
            i
        };
        let phi: f64 = self.rng.random_range(-1.0..=1.0);
        let mut cand = self.sources[i].clone();
        cand[dim] = clip(
            cand[dim] + phi * (cand[dim] - self.sources[k][dim]),
            self.bounds[dim],
        );
        let v = self.eval(&cand);
        if v < self.values[i] {
            self.sources[i] = cand;
            self.values[i] = v;
            self.trials[i] = 0;
        } else {
            self.trials[i] += 1;
        }
    }
}

/// Minimizes `objective` over the box `bounds`. Deterministic for a fixed
/// seed; returns the best point evaluated.
pub fn abc_optimize<F>(mut objective: F, bounds: &[(f64, f64)], config: &AbcConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if bounds.is_empty() {
        return Err(Error::Precondition("ABC needs at least one dimension".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Precondition("ABC bounds must be finite with lo <= hi".into()));
    }
    if config.popsize == 0 {
        return Err(Error::Config("ABC popsize must be positive".into()));
    }
    let mut colony = Colony {
        objective: &mut objective,
        bounds,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        sources: Vec::with_capacity(config.popsize),
        values: Vec::with_capacity(config.popsize),
        trials: vec![0; config.popsize],
        best: (Vec::new(), f64::INFINITY),
        evaluations: 0,
    };
    for _ in 0..config.popsize {
        let x = colony.random_point();
        let v = colony.eval(&x);
        colony.sources.push(x);
        colony.values.push(v);
    }
    for _ in 0..config.max_iters {
        for i in 0..config.popsize {
            colony.explore(i);
        }
        let fits: Vec<f64> = colony.values.iter().map(|&v| fitness(v)).collect();
        let total: f64 = fits.iter().sum();
        for _ in 0..config.popsize {
            let i = if total > 0.0 {
                let mut pick = colony.rng.random_range(0.0..total);
                let mut chosen = config.popsize - 1;
                for (j, f) in fits.iter().enumerate() {
                    if pick < *f {
                        chosen = j;
                        break;
                    }
                    pick -= f;
                }
                chosen
            } else {
                colony.rng.random_range(0..config.popsize)
            };
            colony.explore(i);
        }
        let (worst, &count) = colony
            .trials
            .iter()
            .enumerate()
            .max_by_key(|(j, t)| (**t, std::cmp::Reverse(*j)))
            .expect("nonempty colony");
        if count > config.epoch_limit {
            let x = colony.random_point();
            let v = colony.eval(&x);
            colony.sources[worst] = x;
            colony.values[worst] = v;
            colony.trials[worst] = 0;
        }
    }
    let evaluations = colony.evaluations;
    let (x, value) = colony.best;
    Ok(OptimResult {
        x,
        value,
        evaluations,
        failed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_reaches_optimum() {
        let r = abc_optimize(sphere, &[(-5.0, 5.0), (-5.0, 5.0)], &AbcConfig::default()).unwrap();
        assert!(r.value < 1e-2, "value {}", r.value);
        assert!((sphere(&r.x) - r.value).abs() < 1e-15);
    }

    #[test]
    fn single_source_still_returns_point() {
        let cfg = AbcConfig {
            popsize: 1,
            ..AbcConfig::default()
        };
        let r = abc_optimize(sphere, &[(-5.0, 5.0), (-5.0, 5.0)], &cfg).unwrap();
        assert!(r.value.is_finite());
        assert!(r.x.iter().all(|v| (-5.0..=5.0).contains(v)));
    }

    #[test]
    fn seeded_runs_repeat() {
        let b = [(-5.0, 5.0), (-3.0, 4.0)];
        let cfg = AbcConfig {
            seed: 11,
            ..AbcConfig::default()
        };
        let a = abc_optimize(sphere, &b, &cfg).unwrap();
        let again = abc_optimize(sphere, &b, &cfg).unwrap();
        assert_eq!(a, again);
        let other = abc_optimize(sphere, &b, &AbcConfig { seed: 12, ..cfg }).unwrap();
        assert!(other.value.is_finite());
    }

    #[test]
    fn nan_objective_is_tolerated() {
        let r = abc_optimize(
            |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { x[0] * x[0] },
            &[(-1.0, 1.0)],
            &AbcConfig::default(),
        )
        .unwrap();
        assert!(r.value.is_finite());
        assert!(r.x[0] <= 0.0);
    }
}
