//! Physical scenario: waveform numerology, access points and targets.
//!
//! A [`Scene`] is validated on construction and on load, and is never
//! mutated afterwards; the `with_*` methods return new validated scenes.
//! Scene files are JSON documents with the layout
//!
//! ```json
//! {
//!   "waveform": { "carrier_freq_hz": 3.5e9, "subcarrier_spacing_hz": 30000.0,
//!                 "num_subcarriers": 128, "num_symbols": 128,
//!                 "symbol_duration_s": 3.5714285714285716e-5,
//!                 "antenna_spacing_m": 0.0428, "tx_power": 1.0,
//!                 "noise_variance": 1e-14 },
//!   "aps": [ { "position_m": [0.0, 0.0], "num_antennas": 8 }, ... ],
//!   "targets": [ { "position_m": [214.18, 204.18], "speed_mps": 100.0,
//!                  "heading_rad": 0.6, "rcs_variance": 1.0 }, ... ],
//!   "rng_seed": 2024
//! }
//! ```

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    /// OFDM symbol duration including the cyclic prefix.
    pub symbol_duration_s: f64,
    pub antenna_spacing_m: f64,
    pub tx_power: f64,
    pub noise_variance: f64,
}

impl WaveformConfig {
    /// 3.5 GHz carrier, 30 kHz numerology (14 symbols per 0.5 ms slot),
    /// half-wavelength arrays, 128 subcarriers by 128 symbols.
    pub fn nr_3p5ghz() -> Self {
        let carrier = 3.5e9;
        Self {
            carrier_freq_hz: carrier,
            subcarrier_spacing_hz: 30e3,
            num_subcarriers: 128,
            num_symbols: 128,
            symbol_duration_s: 0.5e-3 / 14.0,
            antenna_spacing_m: 0.5 * SPEED_OF_LIGHT / carrier,
            tx_power: 1.0,
            noise_variance: 1.0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Antenna spacing in wavelengths.
    pub fn spacing_ratio(&self) -> f64 {
        self.antenna_spacing_m / self.wavelength()
    }

    /// Largest range that maps to a distinct delay phase across subcarriers.
    pub fn unambiguous_range(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("symbol_duration_s", self.symbol_duration_s),
            ("antenna_spacing_m", self.antenna_spacing_m),
            ("tx_power", self.tx_power),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::Config(format!(
                "noise_variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        if self.num_subcarriers == 0 || self.num_symbols == 0 {
            return Err(Error::Config("num_subcarriers and num_symbols must be positive".into()));
        }
        // Allow a relative slack for values written as 1/Δf.
        if self.symbol_duration_s * self.subcarrier_spacing_hz < 1.0 - 1e-12 {
            return Err(Error::Config(format!(
                "symbol_duration_s {} is shorter than 1/subcarrier_spacing_hz",
                self.symbol_duration_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApNode {
    pub position_m: [f64; 2],
    pub num_antennas: usize,
}

impl ApNode {
    pub fn new(position_m: [f64; 2], num_antennas: usize) -> Result<Self> {
        let ap = Self {
            position_m,
            num_antennas,
        };
        ap.validate()?;
        Ok(ap)
    }

    fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::Config("an AP needs at least one antenna".into()));
        }
        if !self.position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("AP position must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position_m: [f64; 2],
    pub speed_mps: f64,
    /// Heading in `[0, 2π)`.
    pub heading_rad: f64,
    pub rcs_variance: f64,
}

impl TargetState {
    /// Builds a target, normalizing the heading into `[0, 2π)`.
    pub fn new(position_m: [f64; 2], speed_mps: f64, heading_rad: f64, rcs_variance: f64) -> Result<Self> {
        let t = Self {
            position_m,
            speed_mps,
            heading_rad: wrap_to_two_pi(heading_rad),
            rcs_variance,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if !self.position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("target position must be finite".into()));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps >= 0.0) {
            return Err(Error::Config(format!("target speed must be >= 0, got {}", self.speed_mps)));
        }
        if !(self.heading_rad.is_finite() && (0.0..TAU).contains(&self.heading_rad)) {
            return Err(Error::Config(format!(
                "target heading must lie in [0, 2pi), got {}",
                self.heading_rad
            )));
        }
        if !(self.rcs_variance.is_finite() && self.rcs_variance > 0.0) {
            return Err(Error::Config(format!(
                "rcs_variance must be positive, got {}",
                self.rcs_variance
            )));
        }
        Ok(())
    }
}

pub fn wrap_to_two_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    let w = wrap_to_two_pi(angle);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Angle of arrival at `from` of a point at `to`, via `atan2`.
pub fn aoa(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneDoc", into = "SceneDoc")]
pub struct Scene {
    waveform: WaveformConfig,
    aps: Vec<ApNode>,
    targets: Vec<TargetState>,
    rng_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    waveform: WaveformConfig,
    aps: Vec<ApNode>,
    targets: Vec<TargetState>,
    rng_seed: u64,
}

impl TryFrom<SceneDoc> for Scene {
    type Error = Error;

    fn try_from(doc: SceneDoc) -> Result<Self> {
        Scene::new(doc.waveform, doc.aps, doc.targets, doc.rng_seed)
    }
}

impl From<Scene> for SceneDoc {
    fn from(s: Scene) -> Self {
        SceneDoc {
            waveform: s.waveform,
            aps: s.aps,
            targets: s.targets,
            rng_seed: s.rng_seed,
        }
    }
}

impl Scene {
    pub fn new(
        waveform: WaveformConfig,
        aps: Vec<ApNode>,
        targets: Vec<TargetState>,
        rng_seed: u64,
    ) -> Result<Self> {
        waveform.validate()?;
        if aps.len() < 2 {
            return Err(Error::Precondition(format!(
                "cooperative sensing needs at least 2 APs, got {}",
                aps.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::Precondition("a scene needs at least one target".into()));
        }
        for ap in &aps {
            ap.validate()?;
        }
        for t in &targets {
            t.validate()?;
            for ap in &aps {
                if distance(ap.position_m, t.position_m) <= 0.0 {
                    return Err(Error::Domain(format!(
                        "target at {:?} coincides with an AP",
                        t.position_m
                    )));
                }
            }
        }
        Ok(Self {
            waveform,
            aps,
            targets,
            rng_seed,
        })
    }

    /// Four corner APs of a 350 m square with 8 antennas each, three moving
    /// targets inside the (125, 125)–(225, 225) m area, noise set for 0 dB SNR.
    pub fn reference() -> Self {
        let waveform = WaveformConfig::nr_3p5ghz();
        let aps = [[0.0, 0.0], [350.0, 0.0], [0.0, 350.0], [350.0, 350.0]]
            .into_iter()
            .map(|p| ApNode {
                position_m: p,
                num_antennas: 8,
            })
            .collect();
        let targets = vec![
            TargetState::new([214.18, 204.18], 100.0, 0.6, 1.0).unwrap(),
            TargetState::new([131.77, 178.45], 110.0, 1.9, 1.0).unwrap(),
            TargetState::new([214.90, 150.55], 95.0, 2.7, 1.0).unwrap(),
        ];
        let scene = Scene::new(waveform, aps, targets, 2024).expect("reference scene is valid");
        scene.with_snr_db(0.0)
    }

    pub fn waveform(&self) -> &WaveformConfig {
        &self.waveform
    }

    pub fn aps(&self) -> &[ApNode] {
        &self.aps
    }

    pub fn targets(&self) -> &[TargetState] {
        &self.targets
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn ap_positions(&self) -> Vec<[f64; 2]> {
        self.aps.iter().map(|a| a.position_m).collect()
    }

    pub fn antenna_counts(&self) -> Vec<f64> {
        self.aps.iter().map(|a| a.num_antennas as f64).collect()
    }

    pub fn with_waveform(&self, waveform: WaveformConfig) -> Result<Self> {
        Scene::new(waveform, self.aps.clone(), self.targets.clone(), self.rng_seed)
    }

    pub fn with_aps(&self, aps: Vec<ApNode>) -> Result<Self> {
        Scene::new(self.waveform.clone(), aps, self.targets.clone(), self.rng_seed)
    }

    pub fn with_targets(&self, targets: Vec<TargetState>) -> Result<Self> {
        Scene::new(self.waveform.clone(), self.aps.clone(), targets, self.rng_seed)
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        let mut w = self.waveform.clone();
        w.noise_variance = noise_variance;
        self.with_waveform(w)
    }

    /// Expected per-antenna, per-resource-element echo power of the strongest
    /// (AP, target) pair, using the expected RCS power.
    pub fn reference_signal_power(&self) -> f64 {
        let w = &self.waveform;
        let lambda = w.wavelength();
        self.aps
            .iter()
            .flat_map(|ap| {
                self.targets.iter().map(move |t| {
                    let r = distance(ap.position_m, t.position_m);
                    w.tx_power * ap.num_antennas as f64 * t.rcs_variance * lambda * lambda
                        / ((4.0 * PI).powi(3) * r.powi(4))
                })
            })
            .fold(0.0, f64::max)
    }

    /// Sets the noise variance so that the strongest echo sits at `snr_db`.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        let sigma2 = self.reference_signal_power() / 10f64.powf(snr_db / 10.0);
        self.with_noise_variance(sigma2)
            .expect("positive noise variance keeps the scene valid")
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.reference_signal_power() / self.waveform.noise_variance).log10()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelength_is_derived() {
        let w = WaveformConfig::nr_3p5ghz();
        assert!((w.wavelength() - 0.085655).abs() < 1e-5);
        assert!((w.spacing_ratio() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unambiguous_range_covers_geometry() {
        let w = WaveformConfig::nr_3p5ghz();
        assert!((w.unambiguous_range() - 4996.54).abs() < 0.01);
        assert!(w.unambiguous_range() > 350.0 * 2f64.sqrt());
    }

    #[test]
    fn short_symbol_rejected() {
        let mut w = WaveformConfig::nr_3p5ghz();
        w.symbol_duration_s = 0.9 / w.subcarrier_spacing_hz;
        assert!(matches!(w.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn heading_normalized() {
        let t = TargetState::new([1.0, 1.0], 3.0, -0.5, 1.0).unwrap();
        assert!((t.heading_rad - (TAU - 0.5)).abs() < 1e-12);
        let t = TargetState::new([1.0, 1.0], 3.0, 7.0, 1.0).unwrap();
        assert!((t.heading_rad - (7.0 - TAU)).abs() < 1e-12);
        assert!(TargetState::new([1.0, 1.0], -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn scene_invariants() {
        let s = Scene::reference();
        let one_ap = vec![s.aps()[0].clone()];
        assert!(matches!(s.with_aps(one_ap), Err(Error::Precondition(_))));
        assert!(s.with_targets(vec![]).is_err());
        let on_ap = TargetState::new([0.0, 0.0], 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(s.with_targets(vec![on_ap]), Err(Error::Domain(_))));
    }

    #[test]
    fn snr_setting_round_trips() {
        let s = Scene::reference().with_snr_db(17.5);
        assert!((s.snr_db() - 17.5).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let s = Scene::reference().with_seed(u64::MAX - 3);
        let back = Scene::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.rng_seed(), u64::MAX - 3);
        assert_eq!(
            back.waveform().noise_variance.to_bits(),
            s.waveform().noise_variance.to_bits()
        );
    }

    #[test]
    fn invalid_document_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&Scene::reference().to_json()).unwrap();
        v["aps"][0]["num_antennas"] = 0.into();
        assert!(Scene::from_json(&v.to_string()).is_err());
    }
}
