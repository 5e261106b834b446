//! Range extraction from a delay factor: IDFT peak search followed by a
//! MUSIC scan inside the peak's neighbourhood.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::{WaveformConfig, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarseRange {
    pub range_m: f64,
    pub interval_m: [f64; 2],
    pub peak_bin: usize,
}

/// Zero-pads to `n_ifft`, inverse-transforms and converts the magnitude
/// peak to a range with a ±1 bin search interval.
pub fn coarse_range(v_col: &[Complex64], wave: &WaveformConfig, n_ifft: usize) -> Result<CoarseRange> {
    if n_ifft < v_col.len() {
        return Err(Error::Precondition(format!(
            "IDFT size {n_ifft} is shorter than the {} samples",
            v_col.len()
        )));
    }
    if v_col.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::DegenerateInput("delay factor is all zero".into()));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_ifft];
    buf[..v_col.len()].copy_from_slice(v_col);
    FftPlanner::new().plan_fft_inverse(n_ifft).process(&mut buf);
    let (peak_bin, _) = buf
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
    let quantum = SPEED_OF_LIGHT / (2.0 * wave.subcarrier_spacing_hz * n_ifft as f64);
    let k = peak_bin as f64;
    Ok(CoarseRange {
        range_m: k * quantum,
        interval_m: [((k - 1.0) * quantum).max(0.0), (k + 1.0) * quantum],
        peak_bin,
    })
}

/// Delay steering vector for a candidate range, element `n` (1-based)
/// = exp(−j2πnΔf·2r/c).
pub fn delay_steering(range_m: f64, n: usize, wave: &WaveformConfig) -> Vec<Complex64> {
    let phi = -TAU * wave.subcarrier_spacing_hz * 2.0 * range_m / SPEED_OF_LIGHT;
    (1..=n).map(|k| Complex64::from_polar(1.0, phi * k as f64)).collect()
}

/// Signal subspace of the sample covariance `â âᴴ`: its dominant
/// eigenvector.
pub fn dominant_eigenvector(v_col: &[Complex64]) -> DVector<Complex64> {
    let a = DVector::from_column_slice(v_col);
    let cov: DMatrix<Complex64> = &a * a.adjoint();
    let eig = SymmetricEigen::new(cov);
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) });
    eig.eigenvectors.column(imax).into_owned()
}

/// `a(r)ᴴ U_n U_nᴴ a(r)`, using `U_n U_nᴴ = I − u₁u₁ᴴ` for a one-dimensional
/// signal subspace.
fn noise_projection(u1: &DVector<Complex64>, steer: &[Complex64]) -> f64 {
    let norm2: f64 = steer.iter().map(|z| z.norm_sqr()).sum();
    let proj: Complex64 = u1.iter().zip(steer).map(|(u, s)| u.conj() * s).sum();
    (norm2 - proj.norm_sqr()).max(0.0)
}

/// MUSIC pseudo-spectrum at each range.
pub fn music_spectrum(v_col: &[Complex64], wave: &WaveformConfig, ranges: &[f64]) -> Vec<f64> {
    let u1 = dominant_eigenvector(v_col);
    ranges
        .iter()
        .map(|r| 1.0 / noise_projection(&u1, &delay_steering(*r, v_col.len(), wave)).max(1e-300))
        .collect()
}

/// Scans the pseudo-spectrum over `interval` at `grid_step_m` and returns
/// the range of its maximum.
pub fn music_refine(v_col: &[Complex64], wave: &WaveformConfig, interval: [f64; 2], grid_step_m: f64) -> Result<f64> {
    if !(interval[1] > interval[0]) || !interval.iter().all(|v| v.is_finite()) {
        return Err(Error::Precondition(format!("empty MUSIC interval {interval:?}")));
    }
    if !(grid_step_m > 0.0) {
        return Err(Error::Config("MUSIC grid step must be positive".into()));
    }
    if v_col.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::DegenerateInput("delay factor is all zero".into()));
    }
    let u1 = dominant_eigenvector(v_col);
    let n = v_col.len();
    let steps = ((interval[1] - interval[0]) / grid_step_m).floor() as usize;
    // Incremental phasors avoid a sin/cos per grid point and element.
    let phase_per_m = -TAU * wave.subcarrier_spacing_hz * 2.0 / SPEED_OF_LIGHT;
    let step_rot: Vec<Complex64> = (1..=n)
        .map(|k| Complex64::from_polar(1.0, phase_per_m * grid_step_m * k as f64))
        .collect();
    let mut best = (interval[0], f64::INFINITY);
    let mut steer = delay_steering(interval[0], n, wave);
    for i in 0..=steps {
        if i % 64 == 0 {
            steer = delay_steering(interval[0] + i as f64 * grid_step_m, n, wave);
        }
        let q = noise_projection(&u1, &steer);
        if q < best.1 {
            best = (interval[0] + i as f64 * grid_step_m, q);
        }
        for (s, rot) in steer.iter_mut().zip(&step_rot) {
            *s *= rot;
        }
    }
    Ok(best.0)
}
