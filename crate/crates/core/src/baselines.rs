//! Reference estimators: range-only multilateration and grid search over
//! the fused objectives.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::multilaterate;
use crate::scene::{Scene, WaveformConfig};
use crate::sensing::{FusionSet, SensingConfig, StageOne, TargetEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub grid_step_m: f64,
    /// Speed grid step, m/s.
    pub velocity_step: f64,
    pub heading_step_rad: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            grid_step_m: 1.0,
            velocity_step: 1.0,
            heading_step_rad: 1f64.to_radians(),
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grid_step_m", self.grid_step_m),
            ("velocity_step", self.velocity_step),
            ("heading_step_rad", self.heading_step_rad),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleFix {
    pub position_m: [f64; 2],
    /// Sum of squared range residuals, m².
    pub residual: f64,
    pub converged: bool,
}

/// Range-only maximum-likelihood position: Gauss-Newton least squares from
/// the AP centroid, at most 100 iterations.
pub fn mle_localize(ranges_m: &[f64], aps: &[[f64; 2]]) -> Result<MleFix> {
    if aps.len() < 3 {
        return Err(Error::Precondition(format!(
            "a unique planar fix needs at least 3 APs, got {}",
            aps.len()
        )));
    }
    let fix = multilaterate(aps, ranges_m, None, 100)?;
    Ok(MleFix {
        position_m: fix.position,
        residual: fix.ssr,
        converged: fix.converged,
    })
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

/// Exhaustive search of the localization objective on a position grid
/// anchored at the lower region corner, then of the velocity objective on a
/// speed × heading grid.
pub fn lattice_fuse(
    fusion: &FusionSet,
    aps: &[[f64; 2]],
    wave: &WaveformConfig,
    region: [(f64, f64); 2],
    max_speed_mps: f64,
    lattice: &LatticeConfig,
    detection_threshold: f64,
) -> Result<TargetEstimate> {
    lattice.validate()?;
    if region.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Precondition(format!("lattice region {region:?} is not a finite box")));
    }
    if aps.len() != fusion.num_aps() {
        return Err(Error::Precondition("AP count differs from the fusion set".into()));
    }
    let mut best_p = ([region[0].0, region[1].0], f64::NEG_INFINITY);
    for x in grid(region[0].0, region[0].1, lattice.grid_step_m) {
        for y in grid(region[1].0, region[1].1, lattice.grid_step_m) {
            let t = fusion.localization_trace([x, y], aps, wave);
            if t > best_p.1 {
                best_p = ([x, y], t);
            }
        }
    }
    let t_hat = best_p.0;
    let mut best_v = ((0.0, 0.0), f64::NEG_INFINITY);
    for v in grid(0.0, max_speed_mps, lattice.velocity_step) {
        for h in grid(0.0, TAU - 1e-12, lattice.heading_step_rad) {
            let t = fusion.velocity_trace(v, h, t_hat, aps, wave);
            if t > best_v.1 {
                best_v = ((v, h), t);
            }
        }
    }
    let normalized_trace = best_p.1 / fusion.max_localization_trace();
    Ok(TargetEstimate {
        position_m: t_hat,
        speed_mps: best_v.0 .0,
        heading_rad: best_v.0 .1,
        objective_values: [1.0 / best_p.1.max(1e-300), 1.0 / best_v.1.max(1e-300)],
        normalized_trace,
        detected: normalized_trace > detection_threshold,
        failed: false,
    })
}

/// Lattice estimates for every associated target in a stage-one result.
pub fn lattice_estimates(
    stage: &StageOne,
    scene: &Scene,
    config: &SensingConfig,
    lattice: &LatticeConfig,
) -> Result<Vec<TargetEstimate>> {
    let aps = scene.ap_positions();
    stage
        .fusions
        .iter()
        .map(|f| {
            lattice_fuse(
                f,
                &aps,
                scene.waveform(),
                config.position_bounds(),
                config.max_speed_mps,
                lattice,
                config.detection_threshold,
            )
        })
        .collect()
}

/// Multilateration fixes from the associated MUSIC ranges, one per target.
pub fn mle_estimates(stage: &StageOne, scene: &Scene) -> Result<Vec<MleFix>> {
    let aps = scene.ap_positions();
    let ranges = &stage.association.ranges_m;
    (0..scene.num_targets())
        .map(|u| {
            let r: Vec<f64> = ranges.iter().map(|row| row[u]).collect();
            mle_localize(&r, &aps)
        })
        .collect()
}
