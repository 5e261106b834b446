//! Per-AP OFDM echo synthesis.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scene::{aoa, distance, ApNode, Scene, TargetState, WaveformConfig, SPEED_OF_LIGHT};

/// Complex 3-way array of shape (antennas, subcarriers, symbols), row-major
/// with the symbol index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTensor {
    pub ap_index: usize,
    dims: [usize; 3],
    data: Vec<Complex64>,
}

impl EchoTensor {
    pub fn zeros(ap_index: usize, dims: [usize; 3]) -> Self {
        Self {
            ap_index,
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(ap_index: usize, dims: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] || data.is_empty() {
            return Err(Error::Precondition(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self {
            ap_index,
            dims,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, p: usize, n: usize, m: usize) -> usize {
        (p * self.dims[1] + n) * self.dims[2] + m
    }

    #[inline]
    pub fn get(&self, p: usize, n: usize, m: usize) -> Complex64 {
        self.data[self.index(p, n, m)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Adds `scale · a ∘ d ∘ f` in place.
    pub fn add_outer(&mut self, a: &[Complex64], d: &[Complex64], f: &[Complex64]) {
        assert_eq!([a.len(), d.len(), f.len()], self.dims);
        let (nc, m) = (self.dims[1], self.dims[2]);
        for (p, ap) in a.iter().enumerate() {
            for (n, dn) in d.iter().enumerate() {
                let ad = ap * dn;
                let base = (p * nc + n) * m;
                for (slot, fm) in self.data[base..base + m].iter_mut().zip(f) {
                    *slot += ad * fm;
                }
            }
        }
    }
}

/// Receive steering vector, element `p` (1-based) = exp(j2πp(d/λ)sinθ).
pub fn steering_rx(theta_rad: f64, n_antennas: usize, wave: &WaveformConfig) -> Vec<Complex64> {
    let k = TAU * wave.spacing_ratio() * theta_rad.sin();
    (1..=n_antennas)
        .map(|p| Complex64::from_polar(1.0, k * p as f64))
        .collect()
}

/// Round-trip attenuation for the given RCS draw.
pub fn path_gain(ap: &ApNode, tgt: &TargetState, rcs_draw: Complex64, wave: &WaveformConfig) -> Result<Complex64> {
    let r = distance(ap.position_m, tgt.position_m);
    path_gain_at_range(r, rcs_draw, wave)
}

pub fn path_gain_at_range(r: f64, rcs_draw: Complex64, wave: &WaveformConfig) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("path gain needs a positive range, got {r}")));
    }
    let lambda = wave.wavelength();
    let amp = (lambda * lambda / ((4.0 * PI).powi(3) * r.powi(4))).sqrt();
    Ok(rcs_draw * amp)
}

pub fn doppler_shift(ap: &ApNode, tgt: &TargetState, wave: &WaveformConfig) -> f64 {
    let theta_l = aoa(ap.position_m, tgt.position_m);
    doppler_from_angles(theta_l, tgt.speed_mps, tgt.heading_rad, wave)
}

pub fn doppler_from_angles(theta_l: f64, speed: f64, heading: f64, wave: &WaveformConfig) -> f64 {
    -2.0 * wave.carrier_freq_hz * speed * (theta_l - heading).cos() / SPEED_OF_LIGHT
}

/// One complex Gaussian RCS draw per target, from stream 0 of the scene seed.
pub fn rcs_draws(scene: &Scene) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed());
    scene
        .targets()
        .iter()
        .map(|t| complex_gaussian(&mut rng, t.rcs_variance))
        .collect()
}

pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Rank-one factors of one target's echo at one AP: angle (amplitude folded
/// in), delay and Doppler vectors.
pub fn target_factors(
    scene: &Scene,
    ap_index: usize,
    target_index: usize,
    rcs_draw: Complex64,
) -> Result<[Vec<Complex64>; 3]> {
    let wave = scene.waveform();
    let ap = scene
        .aps()
        .get(ap_index)
        .ok_or_else(|| Error::Precondition(format!("AP index {ap_index} out of range")))?;
    let tgt = scene
        .targets()
        .get(target_index)
        .ok_or_else(|| Error::Precondition(format!("target index {target_index} out of range")))?;
    let alpha = path_gain(ap, tgt, rcs_draw, wave)?;
    let na = ap.num_antennas;
    // matched transmit beam gives |χ_t| = √N_A
    let amp = alpha * (wave.tx_power.sqrt() * (na as f64).sqrt());
    let theta = aoa(ap.position_m, tgt.position_m);
    let a_a: Vec<Complex64> = steering_rx(theta, na, wave).into_iter().map(|s| s * amp).collect();
    let tau = 2.0 * distance(ap.position_m, tgt.position_m) / SPEED_OF_LIGHT;
    let a_d = (1..=wave.num_subcarriers)
        .map(|n| Complex64::from_polar(1.0, -TAU * n as f64 * wave.subcarrier_spacing_hz * tau))
        .collect();
    let fd = doppler_shift(ap, tgt, wave);
    let a_f = (1..=wave.num_symbols)
        .map(|m| Complex64::from_polar(1.0, TAU * fd * m as f64 * wave.symbol_duration_s))
        .collect();
    Ok([a_a, a_d, a_f])
}

/// Echo tensor at `ap_index` using the scene's own RCS draws.
pub fn synthesize_echo(scene: &Scene, ap_index: usize, noiseless: bool) -> Result<EchoTensor> {
    synthesize_echo_with_rcs(scene, ap_index, &rcs_draws(scene), noiseless)
}

/// Echo tensor with caller-supplied RCS draws. Noise comes from stream
/// `ap_index + 1` of the scene seed, so APs draw independent noise.
pub fn synthesize_echo_with_rcs(
    scene: &Scene,
    ap_index: usize,
    rcs: &[Complex64],
    noiseless: bool,
) -> Result<EchoTensor> {
    if rcs.len() != scene.num_targets() {
        return Err(Error::Precondition(format!(
            "{} RCS draws for {} targets",
            rcs.len(),
            scene.num_targets()
        )));
    }
    let ap = scene
        .aps()
        .get(ap_index)
        .ok_or_else(|| Error::Precondition(format!("AP index {ap_index} out of range")))?;
    let wave = scene.waveform();
    let dims = [ap.num_antennas, wave.num_subcarriers, wave.num_symbols];
    let mut tensor = EchoTensor::zeros(ap_index, dims);
    for (u, beta) in rcs.iter().enumerate() {
        let [a, d, f] = target_factors(scene, ap_index, u, *beta)?;
        tensor.add_outer(&a, &d, &f);
    }
    if !noiseless && wave.noise_variance > 0.0 {
        add_noise(&mut tensor, scene.rng_seed(), wave.noise_variance);
    }
    Ok(tensor)
}

fn add_noise(tensor: &mut EchoTensor, seed: u64, variance: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tensor.ap_index as u64 + 1);
    for z in tensor.data_mut() {
        *z += complex_gaussian(&mut rng, variance);
    }
}

/// Noise-only tensor with the same draws `synthesize_echo` would add.
pub fn noise_tensor(scene: &Scene, ap_index: usize) -> Result<EchoTensor> {
    let ap = scene
        .aps()
        .get(ap_index)
        .ok_or_else(|| Error::Precondition(format!("AP index {ap_index} out of range")))?;
    let wave = scene.waveform();
    let mut t = EchoTensor::zeros(ap_index, [ap.num_antennas, wave.num_subcarriers, wave.num_symbols]);
    add_noise(&mut t, scene.rng_seed(), wave.noise_variance);
    Ok(t)
}
