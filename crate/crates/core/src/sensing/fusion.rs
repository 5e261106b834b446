//! Symbol-level fusion matrices and the localization / velocity objectives
//! built from them.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::echo::doppler_from_angles;
use crate::error::{Error, Result};
use crate::scene::{aoa, distance, WaveformConfig, SPEED_OF_LIGHT};

use super::noise::NOISE_FLOOR;

type CMat = DMatrix<Complex64>;

/// Weighted per-AP factor rows for one target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionSet {
    /// Delay rows, L × N_c.
    #[serde(skip)]
    pub s_tilde: CMat,
    /// Angle rows zero-padded to Ψ columns, L × Ψ.
    #[serde(skip)]
    pub k_tilde: CMat,
    /// Doppler rows, L × M.
    #[serde(skip)]
    pub t_tilde: CMat,
    pub weights: Vec<f64>,
    pub psi: usize,
    pub antennas: Vec<usize>,
}

/// The three factor columns one AP contributes for a target:
/// `[angle, delay, doppler]`.
pub type TargetColumns = [Vec<Complex64>; 3];

fn unit_magnitude(col: &[Complex64]) -> Vec<Complex64> {
    let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { (col.len() as f64).sqrt() / norm } else { 0.0 };
    col.iter().map(|z| z * scale).collect()
}

/// Inverse-variance weights normalized to sum to one.
pub fn mrc_weights(sigma2: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = sigma2.iter().map(|s| 1.0 / s.max(NOISE_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

/// Builds the fusion set from each AP's columns for one target. Columns are
/// rescaled to unit mean magnitude so that only phase structure and the
/// weights matter.
pub fn build_fusion(columns: &[TargetColumns], sigma2: &[f64]) -> Result<FusionSet> {
    let l = columns.len();
    if l < 2 {
        return Err(Error::Precondition(format!("fusion needs at least 2 APs, got {l}")));
    }
    if sigma2.len() != l {
        return Err(Error::Precondition(format!("{l} APs but {} noise estimates", sigma2.len())));
    }
    let nc = columns[0][1].len();
    let m = columns[0][2].len();
    if columns.iter().any(|c| c[1].len() != nc || c[2].len() != m || c[0].is_empty()) {
        return Err(Error::Precondition("fusion columns differ in subcarrier or symbol count".into()));
    }
    let antennas: Vec<usize> = columns.iter().map(|c| c[0].len()).collect();
    let psi = *antennas.iter().max().expect("nonempty");
    let weights = mrc_weights(sigma2);
    let mut s_tilde = CMat::zeros(l, nc);
    let mut k_tilde = CMat::zeros(l, psi);
    let mut t_tilde = CMat::zeros(l, m);
    for (i, (cols, w)) in columns.iter().zip(&weights).enumerate() {
        for (j, z) in unit_magnitude(&cols[0]).into_iter().enumerate() {
            k_tilde[(i, j)] = z * *w;
        }
        for (j, z) in unit_magnitude(&cols[1]).into_iter().enumerate() {
            s_tilde[(i, j)] = z * *w;
        }
        for (j, z) in unit_magnitude(&cols[2]).into_iter().enumerate() {
            t_tilde[(i, j)] = z * *w;
        }
    }
    Ok(FusionSet {
        s_tilde,
        k_tilde,
        t_tilde,
        weights,
        psi,
        antennas,
    })
}

/// `|Σ_k row[k] e^{jφ(k+1)}|` by Horner's rule.
fn phasor_sum(row: impl DoubleEndedIterator<Item = Complex64>, phi: f64) -> f64 {
    let z = Complex64::from_polar(1.0, phi);
    let acc = row.rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    (acc * z).norm()
}

impl FusionSet {
    pub fn num_aps(&self) -> usize {
        self.weights.len()
    }

    /// Largest attainable localization trace, `Σ_l w_l (N_c + N_A^l)`.
    pub fn max_localization_trace(&self) -> f64 {
        let nc = self.s_tilde.ncols() as f64;
        self.weights
            .iter()
            .zip(&self.antennas)
            .map(|(w, na)| w * (nc + *na as f64))
            .sum()
    }

    /// Largest attainable velocity trace, `Σ_l w_l M`.
    pub fn max_velocity_trace(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.t_tilde.ncols() as f64
    }

    /// Diagonal sum of `|S̃ F_d| + |K̃ F_a|` at a candidate position.
    pub fn localization_trace(&self, candidate: [f64; 2], aps: &[[f64; 2]], wave: &WaveformConfig) -> f64 {
        let k_range = TAU * wave.subcarrier_spacing_hz * 2.0 / SPEED_OF_LIGHT;
        let k_angle = -TAU * wave.spacing_ratio();
        aps.iter()
            .enumerate()
            .map(|(l, ap)| {
                let r = distance(*ap, candidate);
                let sin_t = aoa(*ap, candidate).sin();
                phasor_sum(self.s_tilde.row(l).iter().copied(), k_range * r)
                    + phasor_sum(self.k_tilde.row(l).iter().copied(), k_angle * sin_t)
            })
            .sum()
    }

    /// Diagonal sum of `|T̃ E|` for a candidate speed and heading, with AoAs
    /// taken from `t_hat`.
    pub fn velocity_trace(&self, speed: f64, heading: f64, t_hat: [f64; 2], aps: &[[f64; 2]], wave: &WaveformConfig) -> f64 {
        aps.iter()
            .enumerate()
            .map(|(l, ap)| {
                let fd = doppler_from_angles(aoa(*ap, t_hat), speed, heading, wave);
                phasor_sum(self.t_tilde.row(l).iter().copied(), -TAU * fd * wave.symbol_duration_s)
            })
            .sum()
    }
}

fn check_aps(fusion: &FusionSet, aps: &[[f64; 2]]) -> Result<()> {
    if aps.len() != fusion.num_aps() {
        return Err(Error::Precondition(format!(
            "fusion set has {} APs but {} positions were given",
            fusion.num_aps(),
            aps.len()
        )));
    }
    Ok(())
}

/// Localization objective: reciprocal of the fused trace.
pub fn localization_objective(candidate: [f64; 2], fusion: &FusionSet, aps: &[[f64; 2]], wave: &WaveformConfig) -> Result<f64> {
    check_aps(fusion, aps)?;
    Ok(1.0 / fusion.localization_trace(candidate, aps, wave).max(1e-300))
}

/// Velocity objective at `(speed, heading)`.
pub fn velocity_objective(
    candidate: [f64; 2],
    fusion: &FusionSet,
    t_hat: [f64; 2],
    aps: &[[f64; 2]],
    wave: &WaveformConfig,
) -> Result<f64> {
    check_aps(fusion, aps)?;
    Ok(1.0 / fusion.velocity_trace(candidate[0], candidate[1], t_hat, aps, wave).max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_direct_sum() {
        let row: Vec<Complex64> = (0..7).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let phi = 0.37;
        let direct: Complex64 = row
            .iter()
            .enumerate()
            .map(|(k, c)| c * Complex64::from_polar(1.0, phi * (k + 1) as f64))
            .sum();
        assert!((phasor_sum(row.iter().copied(), phi) - direct.norm()).abs() < 1e-12);
    }

    #[test]
    fn single_ap_rejected() {
        let cols = [vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(1.0, 0.0)]];
        assert!(build_fusion(&[cols], &[1.0]).is_err());
    }
}
