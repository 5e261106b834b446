//! Complex CP decomposition by regularized alternating least squares.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::echo::{complex_gaussian, EchoTensor};
use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpConfig {
    pub max_sweeps: usize,
    /// Stop when the relative residual changes by less than this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Tikhonov weight relative to the mean squared tensor entry.
    pub regularization: f64,
    /// Halve the regularization every this many sweeps.
    pub decay_every: usize,
    /// Start the first restart from delay/Doppler spectral peaks instead of
    /// random factors.
    pub spectral_init: bool,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-8,
            restarts: 3,
            seed: 0,
            regularization: 1e-6,
            decay_every: 50,
            spectral_init: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    /// Angle factor, antennas × rank.
    pub u_mat: CMat,
    /// Delay factor, subcarriers × rank.
    pub v_mat: CMat,
    /// Doppler factor, symbols × rank.
    pub w_mat: CMat,
    /// `‖Y − ⟦U,V,W⟧‖_F / ‖Y‖_F`.
    pub fit_residual: f64,
    pub sweeps: usize,
    /// Set when no restart met the stopping tolerance.
    pub not_converged: bool,
    /// Relative residual after each sweep of the returned restart.
    pub fit_history: Vec<f64>,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.u_mat.ncols()
    }

    pub fn reconstruct(&self, ap_index: usize) -> EchoTensor {
        let dims = [self.u_mat.nrows(), self.v_mat.nrows(), self.w_mat.nrows()];
        let mut t = EchoTensor::zeros(ap_index, dims);
        for r in 0..self.rank() {
            let a: Vec<Complex64> = self.u_mat.column(r).iter().copied().collect();
            let d: Vec<Complex64> = self.v_mat.column(r).iter().copied().collect();
            let f: Vec<Complex64> = self.w_mat.column(r).iter().copied().collect();
            t.add_outer(&a, &d, &f);
        }
        t
    }

    /// Column `r` of each factor as owned vectors.
    pub fn component(&self, r: usize) -> [Vec<Complex64>; 3] {
        [
            self.u_mat.column(r).iter().copied().collect(),
            self.v_mat.column(r).iter().copied().collect(),
            self.w_mat.column(r).iter().copied().collect(),
        ]
    }

    /// Reorders columns so that new column `u` is old column `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> CpFactors {
        let pick = |m: &CMat| CMat::from_fn(m.nrows(), perm.len(), |i, j| m[(i, perm[j])]);
        CpFactors {
            u_mat: pick(&self.u_mat),
            v_mat: pick(&self.v_mat),
            w_mat: pick(&self.w_mat),
            ..self.clone()
        }
    }
}

pub fn relative_residual(tensor: &EchoTensor, factors: &CpFactors) -> f64 {
    let recon = factors.reconstruct(tensor.ap_index);
    let num: f64 = tensor
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    num.sqrt() / tensor.frobenius_norm()
}

/// Mode products against the conjugated other two factors.
fn mttkrp(y: &[Complex64], dims: [usize; 3], f1: &CMat, f2: &CMat, mode: usize) -> CMat {
    let [np, nn, nm] = dims;
    let rank = f1.ncols();
    let rows = dims[mode];
    let mut out = CMat::zeros(rows, rank);
    let c1: CMat = f1.map(|z| z.conj());
    let c2: CMat = f2.map(|z| z.conj());
    for r in 0..rank {
        match mode {
            0 => {
                // f1 = V, f2 = W
                for p in 0..np {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for n in 0..nn {
                        let base = (p * nn + n) * nm;
                        let mut inner = Complex64::new(0.0, 0.0);
                        for (m, y) in y[base..base + nm].iter().enumerate() {
                            inner += y * c2[(m, r)];
                        }
                        acc += inner * c1[(n, r)];
                    }
                    out[(p, r)] = acc;
                }
            }
            1 => {
                // f1 = U, f2 = W
                for p in 0..np {
                    let up = c1[(p, r)];
                    for n in 0..nn {
                        let base = (p * nn + n) * nm;
                        let mut inner = Complex64::new(0.0, 0.0);
                        for (m, y) in y[base..base + nm].iter().enumerate() {
                            inner += y * c2[(m, r)];
                        }
                        out[(n, r)] += inner * up;
                    }
                }
            }
            _ => {
                // f1 = U, f2 = V
                for p in 0..np {
                    let up = c1[(p, r)];
                    for n in 0..nn {
                        let s = up * c2[(n, r)];
                        let base = (p * nn + n) * nm;
                        for (m, y) in y[base..base + nm].iter().enumerate() {
                            out[(m, r)] += y * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(AᵀĀ) ∘ (BᵀB̄)`.
fn gram(a: &CMat, b: &CMat) -> CMat {
    let ga = a.transpose() * a.map(|z| z.conj());
    let gb = b.transpose() * b.map(|z| z.conj());
    ga.component_mul(&gb)
}

/// Solves `X (G + δI) = M` for `X`.
fn solve_right(m: &CMat, g: &CMat, delta: f64) -> Option<CMat> {
    let r = g.nrows();
    let reg = g + CMat::identity(r, r) * Complex64::new(delta, 0.0);
    let xt = reg.transpose().lu().solve(&m.transpose())?;
    Some(xt.transpose())
}

fn normalize_columns(m: &mut CMat) -> Vec<f64> {
    (0..m.ncols())
        .map(|r| {
            let n = m.column(r).norm();
            if n > 0.0 {
                m.column_mut(r).unscale_mut(n);
            }
            n
        })
        .collect()
}

struct Run {
    u: CMat,
    v: CMat,
    w: CMat,
    fit: f64,
    sweeps: usize,
    converged: bool,
    history: Vec<f64>,
}

fn tone(len: usize, omega: f64) -> Vec<Complex64> {
    (0..len).map(|i| Complex64::from_polar(1.0, omega * i as f64)).collect()
}

/// `Σ_p |Σ_{n,m} y[p,n,m] e^{−j(ω_d n + ω_f m)}|²` and the per-antenna
/// projections.
fn tone_energy(y: &[Complex64], dims: [usize; 3], wd: f64, wf: f64) -> (f64, Vec<Complex64>) {
    let [np, nn, nm] = dims;
    let td: Vec<Complex64> = tone(nn, wd).iter().map(|z| z.conj()).collect();
    let tf: Vec<Complex64> = tone(nm, wf).iter().map(|z| z.conj()).collect();
    let proj: Vec<Complex64> = (0..np)
        .map(|p| {
            (0..nn)
                .map(|n| {
                    let base = (p * nn + n) * nm;
                    let inner: Complex64 = y[base..base + nm].iter().zip(&tf).map(|(a, b)| a * b).sum();
                    inner * td[n]
                })
                .sum()
        })
        .collect();
    (proj.iter().map(|z| z.norm_sqr()).sum(), proj)
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Delay and Doppler columns from successive peak picking on the
/// antenna-summed 2-D spectrum, subtracting each fitted component before
/// the next.
fn spectral_init(y: &[Complex64], dims: [usize; 3], rank: usize) -> (CMat, CMat) {
    let [np, nn, nm] = dims;
    let (pd, pf) = (4 * nn, 4 * nm);
    let mut planner = FftPlanner::new();
    let fft_d = planner.plan_fft_forward(pd);
    let fft_f = planner.plan_fft_forward(pf);
    let mut res = y.to_vec();
    let mut v = CMat::zeros(nn, rank);
    let mut w = CMat::zeros(nm, rank);
    let mut buf = vec![Complex64::new(0.0, 0.0); pd * pf];
    let mut col = vec![Complex64::new(0.0, 0.0); pd];
    for r in 0..rank {
        let mut power = vec![0.0; pd * pf];
        for p in 0..np {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for n in 0..nn {
                let base = (p * nn + n) * nm;
                buf[n * pf..n * pf + nm].copy_from_slice(&res[base..base + nm]);
                fft_f.process(&mut buf[n * pf..(n + 1) * pf]);
            }
            for k in 0..pf {
                for (n, c) in col.iter_mut().enumerate() {
                    *c = buf[n * pf + k];
                }
                fft_d.process(&mut col);
                for (n, c) in col.iter().enumerate() {
                    power[n * pf + k] += c.norm_sqr();
                }
            }
        }
        let peak = power
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
            .0;
        let (bin_d, bin_f) = (TAU / pd as f64, TAU / pf as f64);
        let mut wd = (peak / pf) as f64 * bin_d;
        let mut wf = (peak % pf) as f64 * bin_f;
        for _ in 0..2 {
            wd = golden_max(|x| tone_energy(&res, dims, x, wf).0, wd - bin_d, wd + bin_d, 30);
            wf = golden_max(|x| tone_energy(&res, dims, wd, x).0, wf - bin_f, wf + bin_f, 30);
        }
        let (_, proj) = tone_energy(&res, dims, wd, wf);
        let (td, tf) = (tone(nn, wd), tone(nm, wf));
        let scale = 1.0 / (nn * nm) as f64;
        for p in 0..np {
            let a = proj[p] * scale;
            for n in 0..nn {
                let base = (p * nn + n) * nm;
                let an = a * td[n];
                for m in 0..nm {
                    res[base + m] -= an * tf[m];
                }
            }
        }
        for n in 0..nn {
            v[(n, r)] = td[n];
        }
        for m in 0..nm {
            w[(m, r)] = tf[m];
        }
    }
    (v, w)
}

fn als_run(
    y: &[Complex64],
    dims: [usize; 3],
    rank: usize,
    config: &CpConfig,
    rng: &mut ChaCha8Rng,
    spectral: bool,
) -> Option<Run> {
    let norm_y2: f64 = y.iter().map(|z| z.norm_sqr()).sum();
    let (mut v, mut w) = if spectral {
        spectral_init(y, dims, rank)
    } else {
        (
            CMat::from_fn(dims[1], rank, |_, _| complex_gaussian(rng, 1.0)),
            CMat::from_fn(dims[2], rank, |_, _| complex_gaussian(rng, 1.0)),
        )
    };
    normalize_columns(&mut v);
    normalize_columns(&mut w);
    let mut u = CMat::zeros(dims[0], rank);
    let mut delta = config.regularization;
    let mut prev_fit = f64::INFINITY;
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        if config.decay_every > 0 && sweeps > 1 && (sweeps - 1) % config.decay_every == 0 {
            delta *= 0.5;
        }
        u = solve_right(&mttkrp(y, dims, &v, &w, 0), &gram(&v, &w), delta)?;
        v = solve_right(&mttkrp(y, dims, &u, &w, 1), &gram(&u, &w), delta)?;
        let m3 = mttkrp(y, dims, &u, &v, 2);
        w = solve_right(&m3, &gram(&u, &v), delta)?;
        // ⟨Y, X⟩ and ‖X‖² from the last mode product, without rebuilding X.
        let inner: f64 = (0..rank)
            .map(|r| {
                w.column(r)
                    .iter()
                    .zip(m3.column(r).iter())
                    .map(|(wi, mi)| (wi.conj() * mi).re)
                    .sum::<f64>()
            })
            .sum();
        let xx: f64 = gram(&u, &v)
            .component_mul(&(w.transpose() * w.map(|z| z.conj())))
            .iter()
            .map(|z| z.re)
            .sum();
        let fit = ((norm_y2 - 2.0 * inner + xx).max(0.0) / norm_y2).sqrt();
        let scale_v = normalize_columns(&mut v);
        let scale_w = normalize_columns(&mut w);
        for r in 0..rank {
            u.column_mut(r).scale_mut(scale_v[r] * scale_w[r]);
        }
        if !fit.is_finite() {
            return None;
        }
        history.push(fit);
        if (prev_fit - fit).abs() < config.tol {
            converged = true;
            break;
        }
        prev_fit = fit;
    }
    Some(Run {
        u,
        v,
        w,
        fit: *history.last()?,
        sweeps,
        converged,
        history,
    })
}

/// Rank-`rank` CP model of `tensor`, best of several seeded restarts.
pub fn cp_decompose(tensor: &EchoTensor, rank: usize, config: &CpConfig) -> Result<CpFactors> {
    if rank == 0 {
        return Err(Error::Precondition("CP rank must be at least 1".into()));
    }
    let dims = tensor.dims();
    let size = (dims[0] * dims[1] * dims[2]) as f64;
    let norm = tensor.frobenius_norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateInput("cannot decompose an all-zero or non-finite tensor".into()));
    }
    let rms = norm / size.sqrt();
    let y: Vec<Complex64> = tensor.data().iter().map(|z| z / rms).collect();
    let mut best: Option<Run> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        if let Some(run) = als_run(&y, dims, rank, config, &mut rng, config.spectral_init && restart == 0) {
            if best.as_ref().is_none_or(|b| run.fit < b.fit) {
                best = Some(run);
            }
        }
    }
    let run = best.ok_or_else(|| Error::DegenerateInput("ALS failed in every restart".into()))?;
    let mut factors = CpFactors {
        u_mat: run.u.map(|z| z * rms),
        v_mat: run.v,
        w_mat: run.w,
        fit_residual: 0.0,
        sweeps: run.sweeps,
        not_converged: !run.converged,
        fit_history: run.history,
    };
    factors.fit_residual = relative_residual(tensor, &factors);
    Ok(factors)
}

/// `|⟨a, b⟩| / (‖a‖‖b‖)`: scale- and phase-invariant column similarity.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() / (na * nb)
}
