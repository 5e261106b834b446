//! Noise level of a factor column from its single-tone fit residual.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

pub const NOISE_FLOOR: f64 = 1e-15;

/// Correlation of `x` with a unit tone at angular frequency `omega`
/// (radians per sample).
fn tone_projection(x: &[Complex64], omega: f64) -> Complex64 {
    let rot = Complex64::from_polar(1.0, -omega);
    let mut ph = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, xi) in x.iter().enumerate() {
        if i % 64 == 0 {
            ph = Complex64::from_polar(1.0, -omega * i as f64);
        }
        acc += xi * ph;
        ph *= rot;
    }
    acc
}

/// Fits `c·e^{jωn}` by a zero-padded DFT peak, golden-section refinement of
/// `ω` and least-squares `c`; returns the mean squared residual.
pub fn estimate_noise_variance(factor_col: &[Complex64]) -> f64 {
    let n = factor_col.len();
    if n == 0 {
        return NOISE_FLOOR;
    }
    let nfft = (4 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[..n].copy_from_slice(factor_col);
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let peak = buf
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) })
        .0;
    let bin = TAU / nfft as f64;
    let mut lo = (peak as f64 - 1.0) * bin;
    let mut hi = (peak as f64 + 1.0) * bin;
    let score = |w: f64| -tone_projection(factor_col, w).norm();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (score(a), score(b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = score(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = score(b);
        }
    }
    let omega = 0.5 * (lo + hi);
    let c = tone_projection(factor_col, omega) / n as f64;
    let resid: f64 = factor_col
        .iter()
        .enumerate()
        .map(|(i, x)| (x - c * Complex64::from_polar(1.0, omega * i as f64)).norm_sqr())
        .sum();
    (resid / n as f64).max(NOISE_FLOOR)
}
