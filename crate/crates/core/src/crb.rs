//! Fisher information and Cramér-Rao bounds for per-target position and
//! absolute velocity.
//!
//! The measurement-domain parameter vector of a target is
//! `[τ_1..τ_L, sinθ_1..sinθ_L, f_D1..f_DL]`. Its Fisher information is block
//! diagonal per AP and is carried as six length-L diagonals. Position and
//! velocity bounds follow by the chain rule through the 2×3L Jacobians.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::placement::DecisionVector;
use crate::scene::{aoa, distance, Scene, TargetState, WaveformConfig, SPEED_OF_LIGHT};

/// Largest accepted condition number before an information matrix is
/// declared singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FimBlocks {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
}

impl FimBlocks {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Full 3L×3L matrix `[A B C; B D E; C E F]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let l = self.len();
        let mut j = DMatrix::zeros(3 * l, 3 * l);
        for i in 0..l {
            let g = self.ap_block(i);
            for r in 0..3 {
                for c in 0..3 {
                    j[(r * l + i, c * l + i)] = g[r][c];
                }
            }
        }
        j
    }

    /// The 3×3 information block of AP `i` in (τ, sinθ, f_D) order.
    pub fn ap_block(&self, i: usize) -> [[f64; 3]; 3] {
        [
            [self.a[i], self.b[i], self.c[i]],
            [self.b[i], self.d[i], self.e[i]],
            [self.c[i], self.e[i], self.f[i]],
        ]
    }
}

/// 2×3L Jacobian of the measurement parameters with respect to two target
/// quantities; columns are `[τ | sinθ | f_D]` blocks of width L.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbPair {
    pub crb_position: Matrix2<f64>,
    pub crb_velocity: Matrix2<f64>,
}

impl CrbPair {
    pub fn trace_position(&self) -> f64 {
        self.crb_position.trace()
    }

    pub fn trace_velocity(&self) -> f64 {
        self.crb_velocity.trace()
    }
}

/// AP layout with (possibly fractional) antenna counts, decoupled from a
/// [`Scene`] so candidate placements can be evaluated without rebuilding one.
#[derive(Debug, Clone)]
pub struct CrbProblem<'a> {
    pub wave: &'a WaveformConfig,
    pub ap_positions: Vec<[f64; 2]>,
    pub antennas: Vec<f64>,
}

impl<'a> CrbProblem<'a> {
    pub fn new(wave: &'a WaveformConfig, ap_positions: Vec<[f64; 2]>, antennas: Vec<f64>) -> Result<Self> {
        if ap_positions.len() != antennas.len() {
            return Err(Error::Precondition(format!(
                "{} AP positions but {} antenna counts",
                ap_positions.len(),
                antennas.len()
            )));
        }
        if let Some(n) = antennas.iter().find(|n| !(n.is_finite() && **n >= 1.0)) {
            return Err(Error::Domain(format!("antenna counts must be >= 1, got {n}")));
        }
        Ok(Self {
            wave,
            ap_positions,
            antennas,
        })
    }

    pub fn from_scene(scene: &'a Scene, antennas: &[f64]) -> Result<Self> {
        Self::new(scene.waveform(), scene.ap_positions(), antennas.to_vec())
    }

    fn ranges(&self, tgt: &TargetState) -> Result<Vec<f64>> {
        self.ap_positions
            .iter()
            .map(|c| {
                let r = distance(*c, tgt.position_m);
                if r > 0.0 {
                    Ok(r)
                } else {
                    Err(Error::Domain(format!(
                        "target at {:?} coincides with an AP",
                        tgt.position_m
                    )))
                }
            })
            .collect()
    }

    pub fn fim_blocks(&self, tgt: &TargetState) -> Result<FimBlocks> {
        if !(self.wave.noise_variance > 0.0) {
            return Err(Error::Domain("Fisher information needs a positive noise variance".into()));
        }
        let w = self.wave;
        let lambda = w.wavelength();
        let k = w.spacing_ratio();
        let df = w.subcarrier_spacing_hz;
        let t = w.symbol_duration_s;
        let nc = w.num_subcarriers as f64;
        let m = w.num_symbols as f64;
        let s1 = |n: f64| n * (n + 1.0) / 2.0;
        let s2 = |n: f64| n * (n + 1.0) * (2.0 * n + 1.0) / 6.0;
        let ranges = self.ranges(tgt)?;
        let l = ranges.len();
        let mut fb = FimBlocks {
            a: vec![0.0; l],
            b: vec![0.0; l],
            c: vec![0.0; l],
            d: vec![0.0; l],
            e: vec![0.0; l],
            f: vec![0.0; l],
        };
        for (i, r) in ranges.iter().enumerate() {
            let na = self.antennas[i];
            let gain2 = lambda * lambda * tgt.rcs_variance / ((4.0 * PI).powi(3) * r.powi(4));
            let q = 4.0 * PI * PI * gain2 / w.noise_variance;
            fb.a[i] = q * df * df * s2(nc) * m * na;
            fb.b[i] = -q * k * df * s1(na) * s1(nc) * m;
            fb.c[i] = -q * t * df * s1(m) * s1(nc) * na;
            fb.d[i] = q * k * k * s2(na) * nc * m;
            fb.e[i] = q * k * t * s1(na) * s1(m) * nc;
            fb.f[i] = q * t * t * s2(m) * na * nc;
        }
        Ok(fb)
    }

    /// Derivatives of `[τ | sinθ | f_D]` with respect to the target's (x, y).
    pub fn jacobian_position(&self, tgt: &TargetState) -> Result<Jacobian> {
        let ranges = self.ranges(tgt)?;
        let l = ranges.len();
        let fc = self.wave.carrier_freq_hz;
        let c = SPEED_OF_LIGHT;
        let mut p = DMatrix::zeros(2, 3 * l);
        for (i, (ap, eta)) in self.ap_positions.iter().zip(&ranges).enumerate() {
            let big_theta = tgt.position_m[0] - ap[0];
            let eps = tgt.position_m[1] - ap[1];
            let theta_l = aoa(*ap, tgt.position_m);
            let xi = -2.0 * fc * tgt.speed_mps * (theta_l - tgt.heading_rad).sin() / c;
            let eta2 = eta * eta;
            let eta3 = eta2 * eta;
            p[(0, i)] = 2.0 * big_theta / (eta * c);
            p[(1, i)] = 2.0 * eps / (eta * c);
            p[(0, l + i)] = -eps * big_theta / eta3;
            p[(1, l + i)] = big_theta * big_theta / eta3;
            p[(0, 2 * l + i)] = xi * eps / eta2;
            p[(1, 2 * l + i)] = -xi * big_theta / eta2;
        }
        Ok(Jacobian { matrix: p })
    }

    /// Derivatives of `[τ | sinθ | f_D]` with respect to (speed, heading).
    /// Delay and angle do not depend on the motion, so only the Doppler
    /// block is populated.
    pub fn jacobian_velocity(&self, tgt: &TargetState) -> Result<Jacobian> {
        self.ranges(tgt)?;
        let l = self.ap_positions.len();
        let k = 2.0 * self.wave.carrier_freq_hz / SPEED_OF_LIGHT;
        let mut t = DMatrix::zeros(2, 3 * l);
        for (i, ap) in self.ap_positions.iter().enumerate() {
            let delta = aoa(*ap, tgt.position_m) - tgt.heading_rad;
            t[(0, 2 * l + i)] = -k * delta.cos();
            t[(1, 2 * l + i)] = -k * tgt.speed_mps * delta.sin();
        }
        Ok(Jacobian { matrix: t })
    }

    pub fn crb_position(&self, tgt: &TargetState) -> Result<Matrix2<f64>> {
        let fb = self.fim_blocks(tgt)?;
        let p = self.jacobian_position(tgt)?;
        project_and_invert(&fb, &p)
    }

    pub fn crb_velocity(&self, tgt: &TargetState) -> Result<Matrix2<f64>> {
        let fb = self.fim_blocks(tgt)?;
        let t = self.jacobian_velocity(tgt)?;
        project_and_invert(&fb, &t)
    }

    pub fn crb_pair(&self, tgt: &TargetState) -> Result<CrbPair> {
        let fb = self.fim_blocks(tgt)?;
        let p = self.jacobian_position(tgt)?;
        let t = self.jacobian_velocity(tgt)?;
        Ok(CrbPair {
            crb_position: project_and_invert(&fb, &p)?,
            crb_velocity: project_and_invert(&fb, &t)?,
        })
    }

    /// `α ψ_p tr(CRB_p) + (1−α) ψ_a tr(CRB_a)` for one target.
    pub fn weighted(&self, tgt: &TargetState, alpha: f64, psi_p: f64, psi_a: f64) -> Result<f64> {
        let pair = self.crb_pair(tgt)?;
        Ok(alpha * psi_p * pair.trace_position() + (1.0 - alpha) * psi_a * pair.trace_velocity())
    }
}

/// `J_θ = M J Mᵀ` exploiting the per-AP block structure, then a guarded
/// inverse.
fn project_and_invert(fb: &FimBlocks, jac: &Jacobian) -> Result<Matrix2<f64>> {
    let l = fb.len();
    let mut info = Matrix2::zeros();
    for i in 0..l {
        let g = fb.ap_block(i);
        for r in 0..2 {
            let row = [
                jac.matrix[(r, i)],
                jac.matrix[(r, l + i)],
                jac.matrix[(r, 2 * l + i)],
            ];
            for s in r..2 {
                let col = [
                    jac.matrix[(s, i)],
                    jac.matrix[(s, l + i)],
                    jac.matrix[(s, 2 * l + i)],
                ];
                let mut acc = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        acc += row[a] * g[a][b] * col[b];
                    }
                }
                info[(r, s)] += acc;
            }
        }
    }
    info[(1, 0)] = info[(0, 1)];
    invert_spd(&info)
}

/// Inverse of a symmetric positive-definite 2×2 matrix, rejecting
/// ill-conditioned input.
pub fn invert_spd(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let cond = condition_number(m);
    if !(cond.is_finite() && cond <= MAX_CONDITION) {
        return Err(Error::SingularFim { cond });
    }
    let chol = m.cholesky().ok_or(Error::SingularFim { cond })?;
    let inv = chol.inverse();
    Ok((inv + inv.transpose()) * 0.5)
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest is not positive.
pub fn condition_number(m: &Matrix2<f64>) -> f64 {
    if !m.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(*m).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn scene_target(scene: &Scene, target_index: usize) -> Result<&TargetState> {
    scene
        .targets()
        .get(target_index)
        .ok_or_else(|| Error::Precondition(format!("target index {target_index} out of range")))
}

pub fn fim_blocks(scene: &Scene, target_index: usize, antennas: &[f64]) -> Result<FimBlocks> {
    CrbProblem::from_scene(scene, antennas)?.fim_blocks(scene_target(scene, target_index)?)
}

pub fn jacobian_position(scene: &Scene, target_index: usize) -> Result<Jacobian> {
    CrbProblem::from_scene(scene, &scene.antenna_counts())?.jacobian_position(scene_target(scene, target_index)?)
}

pub fn jacobian_velocity(scene: &Scene, target_index: usize) -> Result<Jacobian> {
    CrbProblem::from_scene(scene, &scene.antenna_counts())?.jacobian_velocity(scene_target(scene, target_index)?)
}

pub fn crb_position(scene: &Scene, target_index: usize, antennas: &[f64]) -> Result<Matrix2<f64>> {
    CrbProblem::from_scene(scene, antennas)?.crb_position(scene_target(scene, target_index)?)
}

pub fn crb_velocity(scene: &Scene, target_index: usize, antennas: &[f64]) -> Result<Matrix2<f64>> {
    CrbProblem::from_scene(scene, antennas)?.crb_velocity(scene_target(scene, target_index)?)
}

pub fn crb_pair(scene: &Scene, target_index: usize, antennas: &[f64]) -> Result<CrbPair> {
    CrbProblem::from_scene(scene, antennas)?.crb_pair(scene_target(scene, target_index)?)
}

/// Per-target weighted CRB objective with AP positions and antenna counts
/// taken from the decision vector.
pub fn weighted_objective(
    scene: &Scene,
    z: &DecisionVector,
    alpha: f64,
    psi_p: f64,
    psi_a: f64,
) -> Result<Vec<f64>> {
    weighted_objective_for(scene.waveform(), z, scene.targets(), alpha, psi_p, psi_a)
}

pub fn weighted_objective_for(
    wave: &WaveformConfig,
    z: &DecisionVector,
    targets: &[TargetState],
    alpha: f64,
    psi_p: f64,
    psi_a: f64,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let problem = CrbProblem::new(wave, z.positions(), z.antennas().to_vec())?;
    targets
        .iter()
        .map(|t| problem.weighted(t, alpha, psi_p, psi_a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_guard_rejects_rank_deficient() {
        let m = Matrix2::new(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(invert_spd(&m), Err(Error::SingularFim { .. })));
        let m = Matrix2::new(1.0, 0.0, 0.0, 1e-13);
        match invert_spd(&m) {
            Err(Error::SingularFim { cond }) => assert!((cond - 1e13).abs() / 1e13 < 1e-6),
            other => panic!("expected singular FIM, got {other:?}"),
        }
        let inv = invert_spd(&Matrix2::new(2.0, 1.0, 1.0, 2.0)).unwrap();
        let expect = Matrix2::new(2.0, -1.0, -1.0, 2.0) / 3.0;
        assert!((inv - expect).norm() < 1e-15);
    }

    #[test]
    fn zero_speed_velocity_bound_is_singular() {
        let s = Scene::reference();
        let mut t = s.targets()[0].clone();
        t.speed_mps = 0.0;
        let s = s.with_targets(vec![t]).unwrap();
        let err = crb_velocity(&s, 0, &s.antenna_counts()).unwrap_err();
        assert_eq!(err.kind(), "singular_fim");
    }
}
