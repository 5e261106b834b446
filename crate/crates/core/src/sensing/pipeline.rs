//! End-to-end multi-AP target sensing: per-AP CP decomposition, ranging,
//! association, fusion and continuous location/velocity search.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::echo::{synthesize_echo, EchoTensor};
use crate::error::{Error, Result};
use crate::optim::{abc_optimize, bfgs_refine, AbcConfig, BfgsConfig, OptimResult};
use crate::scene::{wrap_to_two_pi, Scene, WaveformConfig};

use super::association::{associate, AssociationConfig, AssociationOutcome};
use super::cp::{cp_decompose, CpConfig, CpFactors};
use super::fusion::{build_fusion, FusionSet, TargetColumns};
use super::noise::estimate_noise_variance;
use super::ranging::{coarse_range, music_refine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    pub cp: CpConfig,
    pub association: AssociationConfig,
    /// IDFT length as a multiple of the subcarrier count.
    pub ifft_oversampling: usize,
    pub music_grid_step_m: f64,
    /// Target area `[min, max]` corners; the position search box adds
    /// `search_margin_m` on every side.
    pub search_area_m: [[f64; 2]; 2],
    pub search_margin_m: f64,
    pub max_speed_mps: f64,
    pub abc: AbcConfig,
    pub bfgs: BfgsConfig,
    /// Minimum normalized localization trace for a detection.
    pub detection_threshold: f64,
    /// Follow each bee-colony search with quasi-Newton refinement.
    pub refine: bool,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            cp: CpConfig::default(),
            association: AssociationConfig::default(),
            ifft_oversampling: 4,
            music_grid_step_m: 0.01,
            search_area_m: [[125.0, 125.0], [225.0, 225.0]],
            search_margin_m: 20.0,
            max_speed_mps: 200.0,
            abc: AbcConfig::default(),
            bfgs: BfgsConfig::default(),
            detection_threshold: 0.7,
            refine: true,
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.search_area_m;
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || !lo.iter().chain(&hi).all(|v| v.is_finite()) {
            return Err(Error::Config(format!("search area {:?} is empty or non-finite", self.search_area_m)));
        }
        if !(self.search_margin_m >= 0.0) {
            return Err(Error::Config("search margin must be nonnegative".into()));
        }
        if !(self.max_speed_mps > 0.0 && self.max_speed_mps.is_finite()) {
            return Err(Error::Config("max speed must be positive and finite".into()));
        }
        if self.ifft_oversampling == 0 {
            return Err(Error::Config("IDFT oversampling must be at least 1".into()));
        }
        if !(self.music_grid_step_m > 0.0) {
            return Err(Error::Config("MUSIC grid step must be positive".into()));
        }
        if self.abc.popsize == 0 {
            return Err(Error::Config("bee colony needs at least one source".into()));
        }
        Ok(())
    }

    /// Position search box as `[(x_lo, x_hi), (y_lo, y_hi)]`.
    pub fn position_bounds(&self) -> [(f64, f64); 2] {
        let [lo, hi] = self.search_area_m;
        let m = self.search_margin_m;
        [(lo[0] - m, hi[0] + m), (lo[1] - m, hi[1] + m)]
    }

    fn center(&self) -> [f64; 2] {
        let [lo, hi] = self.search_area_m;
        [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetEstimate {
    pub position_m: [f64; 2],
    pub speed_mps: f64,
    pub heading_rad: f64,
    /// Localization and velocity objective values at the estimate.
    pub objective_values: [f64; 2],
    /// Localization trace divided by its noiseless maximum.
    pub normalized_trace: f64,
    pub detected: bool,
    /// Set when a solver could not produce a usable point.
    pub failed: bool,
}

/// Everything computed before the continuous search; shared by every
/// estimator that works from the same echoes.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOne {
    pub factors: Vec<CpFactors>,
    /// `coarse_ranges_m[l][k]`, component order.
    pub coarse_ranges_m: Vec<Vec<f64>>,
    /// `music_ranges_m[l][k]`, component order.
    pub music_ranges_m: Vec<Vec<f64>>,
    pub association: AssociationOutcome,
    /// `noise_variances[l][u]`, reference target order.
    pub noise_variances: Vec<Vec<f64>>,
    /// One fusion set per reference target.
    pub fusions: Vec<FusionSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingReport {
    pub estimates: Vec<TargetEstimate>,
    pub fit_residuals: Vec<f64>,
    pub cp_sweeps: Vec<usize>,
    pub cp_not_converged: Vec<bool>,
    pub coarse_ranges_m: Vec<Vec<f64>>,
    pub music_ranges_m: Vec<Vec<f64>>,
    pub association_cost: f64,
    pub permutations: Vec<Vec<usize>>,
    pub noise_variances: Vec<Vec<f64>>,
    pub fusion_weights: Vec<Vec<f64>>,
}

/// CP decomposition, ranging, association and fusion for all APs.
pub fn stage_one(scene: &Scene, tensors: &[EchoTensor], config: &SensingConfig) -> Result<StageOne> {
    config.validate()?;
    let l = scene.num_aps();
    if l < 2 {
        return Err(Error::Precondition("cooperative sensing needs at least 2 APs".into()));
    }
    if tensors.len() != l {
        return Err(Error::Precondition(format!("{l} APs but {} echo tensors", tensors.len())));
    }
    let wave = scene.waveform();
    let rank = scene.num_targets();
    let n_ifft = config.ifft_oversampling * wave.num_subcarriers;
    let mut factors = Vec::with_capacity(l);
    let mut coarse = Vec::with_capacity(l);
    let mut fine = Vec::with_capacity(l);
    for (ap, tensor) in tensors.iter().enumerate() {
        let mut cp_cfg = config.cp.clone();
        cp_cfg.seed = cp_cfg.seed.wrapping_add(ap as u64);
        let f = cp_decompose(tensor, rank, &cp_cfg)?;
        let mut c_row = Vec::with_capacity(rank);
        let mut f_row = Vec::with_capacity(rank);
        for k in 0..rank {
            let col: Vec<_> = f.v_mat.column(k).iter().copied().collect();
            let c = coarse_range(&col, wave, n_ifft)?;
            f_row.push(music_refine(&col, wave, c.interval_m, config.music_grid_step_m)?);
            c_row.push(c.range_m);
        }
        factors.push(f);
        coarse.push(c_row);
        fine.push(f_row);
    }
    let association = associate(&fine, &scene.ap_positions(), &config.association)?;
    let mut noise = vec![vec![0.0; rank]; l];
    let mut fusions = Vec::with_capacity(rank);
    for u in 0..rank {
        let mut columns: Vec<TargetColumns> = Vec::with_capacity(l);
        for (ap, f) in factors.iter().enumerate() {
            let k = association.permutations[ap][u];
            let [a, d, w] = f.component(k);
            noise[ap][u] = estimate_noise_variance(&d);
            columns.push([a, d, w]);
        }
        let sigma: Vec<f64> = noise.iter().map(|row| row[u]).collect();
        fusions.push(build_fusion(&columns, &sigma)?);
    }
    Ok(StageOne {
        factors,
        coarse_ranges_m: coarse,
        music_ranges_m: fine,
        association,
        noise_variances: noise,
        fusions,
    })
}

fn seeded(abc: &AbcConfig, offset: u64) -> AbcConfig {
    AbcConfig {
        seed: abc.seed.wrapping_add(offset),
        ..abc.clone()
    }
}

fn usable(r: &Result<OptimResult>) -> bool {
    r.as_ref().is_ok_and(|o| !o.failed && o.value.is_finite())
}

/// Continuous location and velocity search for one fused target.
pub fn estimate_target(
    fusion: &FusionSet,
    aps: &[[f64; 2]],
    wave: &WaveformConfig,
    config: &SensingConfig,
    target_index: usize,
) -> TargetEstimate {
    let pos_bounds = config.position_bounds();
    let p3 = |x: &[f64]| 1.0 / fusion.localization_trace([x[0], x[1]], aps, wave).max(1e-300);
    let seed_base = 2 * target_index as u64;
    let coarse = abc_optimize(p3, &pos_bounds, &seeded(&config.abc, seed_base));
    let mut failed = !usable(&coarse);
    let mut pos = match &coarse {
        Ok(o) if o.value.is_finite() => o.clone(),
        _ => OptimResult {
            x: config.center().to_vec(),
            value: p3(&config.center()),
            evaluations: 0,
            failed: true,
        },
    };
    if config.refine && !failed {
        match bfgs_refine(p3, &pos.x, &pos_bounds, &config.bfgs) {
            Ok(r) if r.value <= pos.value => pos = r,
            Ok(_) => {}
            Err(_) => failed = true,
        }
    }
    let t_hat = [pos.x[0], pos.x[1]];
    let p4 = |x: &[f64]| 1.0 / fusion.velocity_trace(x[0], x[1], t_hat, aps, wave).max(1e-300);
    let vel_bounds = [(0.0, config.max_speed_mps), (0.0, TAU)];
    let coarse_v = abc_optimize(p4, &vel_bounds, &seeded(&config.abc, seed_base + 1));
    failed |= !usable(&coarse_v);
    let mut vel = match &coarse_v {
        Ok(o) if o.value.is_finite() => o.clone(),
        _ => OptimResult {
            x: vec![0.0, 0.0],
            value: p4(&[0.0, 0.0]),
            evaluations: 0,
            failed: true,
        },
    };
    if config.refine && !failed {
        // Heading is periodic: search a full turn centred on the coarse value.
        let h0 = vel.x[1];
        let bounds = [(0.0, config.max_speed_mps), (h0 - PI, h0 + PI)];
        match bfgs_refine(p4, &vel.x, &bounds, &config.bfgs) {
            Ok(r) if r.value <= vel.value => vel = r,
            Ok(_) => {}
            Err(_) => failed = true,
        }
    }
    let normalized_trace = fusion.localization_trace(t_hat, aps, wave) / fusion.max_localization_trace();
    TargetEstimate {
        position_m: t_hat,
        speed_mps: vel.x[0],
        heading_rad: wrap_to_two_pi(vel.x[1]),
        objective_values: [pos.value, vel.value],
        normalized_trace,
        detected: normalized_trace > config.detection_threshold,
        failed,
    }
}

/// One estimate per associated target, in reference order.
pub fn estimate_targets(stage: &StageOne, scene: &Scene, config: &SensingConfig) -> Vec<TargetEstimate> {
    let aps = scene.ap_positions();
    stage
        .fusions
        .iter()
        .enumerate()
        .map(|(u, f)| estimate_target(f, &aps, scene.waveform(), config, u))
        .collect()
}

/// Full pipeline on caller-supplied echoes.
pub fn sl_mdts(scene: &Scene, tensors: &[EchoTensor], config: &SensingConfig) -> Result<SensingReport> {
    let stage = stage_one(scene, tensors, config)?;
    let estimates = estimate_targets(&stage, scene, config);
    Ok(report(&stage, estimates))
}

/// Synthesizes every AP's echo from the scene and runs the pipeline.
pub fn sense_scene(scene: &Scene, noiseless: bool, config: &SensingConfig) -> Result<SensingReport> {
    let tensors = (0..scene.num_aps())
        .map(|l| synthesize_echo(scene, l, noiseless))
        .collect::<Result<Vec<_>>>()?;
    sl_mdts(scene, &tensors, config)
}

pub fn report(stage: &StageOne, estimates: Vec<TargetEstimate>) -> SensingReport {
    SensingReport {
        estimates,
        fit_residuals: stage.factors.iter().map(|f| f.fit_residual).collect(),
        cp_sweeps: stage.factors.iter().map(|f| f.sweeps).collect(),
        cp_not_converged: stage.factors.iter().map(|f| f.not_converged).collect(),
        coarse_ranges_m: stage.coarse_ranges_m.clone(),
        music_ranges_m: stage.music_ranges_m.clone(),
        association_cost: stage.association.association_cost,
        permutations: stage.association.permutations.clone(),
        noise_variances: stage.noise_variances.clone(),
        fusion_weights: stage.fusions.iter().map(|f| f.weights.clone()).collect(),
    }
}
