//! Joint AP placement and antenna allocation by ADMM.
//!
//! The decision vector stacks AP coordinates followed by antenna counts,
//! `z = [x_1, y_1, …, x_L, y_L, N_1, …, N_L]`. Each AP may move within a
//! ball around its anchor, antenna counts share a total budget, and the
//! worst-case weighted CRB over a set of sampled targets is minimized.

pub mod admm;
pub mod antenna_qp;
pub mod epigraph;
pub mod projection;

pub use admm::{
    apply_decision, normalize_psi, round_decision, run_admm, run_admm_with, sample_targets, AdmmConfig, AdmmOutcome, AdmmState,
    CrbObjective, IterationRecord, PenaltyAdapt, PlacementObjective, Residuals, SampleArea,
};
pub use antenna_qp::solve_antenna_qp;
pub use epigraph::{update_epigraph_values, EpigraphRule};
pub use projection::project_ball;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    z: Vec<f64>,
}

impl DecisionVector {
    pub fn new(positions: &[[f64; 2]], antennas: &[f64]) -> Result<Self> {
        if positions.len() != antennas.len() || positions.is_empty() {
            return Err(Error::Precondition(format!(
                "{} positions but {} antenna counts",
                positions.len(),
                antennas.len()
            )));
        }
        let mut z: Vec<f64> = positions.iter().flat_map(|p| [p[0], p[1]]).collect();
        z.extend_from_slice(antennas);
        Ok(Self { z })
    }

    pub fn from_slice(z: &[f64]) -> Result<Self> {
        if z.is_empty() || z.len() % 3 != 0 {
            return Err(Error::Precondition(format!(
                "decision vector length {} is not a positive multiple of 3",
                z.len()
            )));
        }
        Ok(Self { z: z.to_vec() })
    }

    pub fn num_aps(&self) -> usize {
        self.z.len() / 3
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn position(&self, l: usize) -> [f64; 2] {
        [self.z[2 * l], self.z[2 * l + 1]]
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        (0..self.num_aps()).map(|l| self.position(l)).collect()
    }

    pub fn antenna(&self, l: usize) -> f64 {
        self.z[2 * self.num_aps() + l]
    }

    pub fn antennas(&self) -> &[f64] {
        &self.z[2 * self.num_aps()..]
    }

    /// 2×3L selection matrix extracting AP `l`'s coordinates.
    pub fn position_selector(&self, l: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(2, self.z.len());
        c[(0, 2 * l)] = 1.0;
        c[(1, 2 * l + 1)] = 1.0;
        c
    }

    /// 1×3L selection row extracting AP `l`'s antenna count.
    pub fn antenna_selector(&self, l: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(1, self.z.len());
        c[(0, 2 * self.num_aps() + l)] = 1.0;
        c
    }
}

/// Uniform position inside each anchor's ball and a uniformly random
/// integer split of the whole antenna budget (at least one per AP).
pub fn random_feasible_decision<R: Rng>(
    anchors: &[[f64; 2]],
    radius: f64,
    budget: usize,
    rng: &mut R,
) -> Result<DecisionVector> {
    let l = anchors.len();
    if l == 0 || budget < l {
        return Err(Error::Config(format!("antenna budget {budget} cannot give {l} APs one antenna each")));
    }
    let positions: Vec<[f64; 2]> = anchors
        .iter()
        .map(|c| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            [c[0] + r * phi.cos(), c[1] + r * phi.sin()]
        })
        .collect();
    let mut antennas = vec![1.0; l];
    for _ in 0..budget - l {
        antennas[rng.random_range(0..l)] += 1.0;
    }
    DecisionVector::new(&positions, &antennas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn selectors_extract_blocks() {
        let z = DecisionVector::new(&[[1.0, 2.0], [3.0, 4.0]], &[5.0, 6.0]).unwrap();
        let v = nalgebra::DVector::from_column_slice(z.as_slice());
        assert_eq!((z.position_selector(1) * &v).as_slice(), &[3.0, 4.0]);
        assert_eq!((z.antenna_selector(0) * &v)[(0, 0)], 5.0);
        assert_eq!(z.positions(), vec![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(z.antennas(), &[5.0, 6.0]);
    }

    #[test]
    fn random_decision_is_feasible() {
        let anchors = [[0.0, 0.0], [350.0, 0.0], [0.0, 350.0], [350.0, 350.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = random_feasible_decision(&anchors, 10.0, 32, &mut rng).unwrap();
            let total: f64 = z.antennas().iter().sum();
            assert_eq!(total, 32.0);
            assert!(z.antennas().iter().all(|n| *n >= 1.0));
            for (l, c) in anchors.iter().enumerate() {
                let p = z.position(l);
                assert!((p[0] - c[0]).hypot(p[1] - c[1]) <= 10.0);
            }
        }
    }
}
