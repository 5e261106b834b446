use std::f64::consts::TAU;

use cfsense_core::echo::{rcs_draws, synthesize_echo, target_factors};
use cfsense_core::geometry::multilaterate;
use cfsense_core::scene::{distance, SPEED_OF_LIGHT};
use cfsense_core::sensing::{
    associate, build_fusion, coarse_range, correlation, cp_decompose, delay_steering, estimate_noise_variance, localization_objective,
    mrc_weights, music_refine, music_spectrum, relative_residual, sense_scene, sl_mdts, stage_one, velocity_objective, AssociationConfig,
    CpConfig, SensingConfig, TargetColumns,
};
use cfsense_core::{ApNode, Error, Scene, TargetState, WaveformConfig};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [350.0, 0.0], [0.0, 350.0], [350.0, 350.0]];

fn wave(n: usize) -> WaveformConfig {
    let mut w = WaveformConfig::nr_3p5ghz();
    w.num_subcarriers = n;
    w.num_symbols = n;
    w
}

fn scene_with(targets: Vec<TargetState>, n: usize, antennas: [usize; 4]) -> Scene {
    let aps = CORNERS.iter().zip(antennas).map(|(p, a)| ApNode::new(*p, a).unwrap()).collect();
    Scene::new(wave(n), aps, targets, 31).unwrap()
}

fn truth_columns(scene: &Scene, u: usize) -> Vec<TargetColumns> {
    let rcs = rcs_draws(scene);
    (0..scene.num_aps()).map(|l| target_factors(scene, l, u, rcs[u]).unwrap()).collect()
}

fn one_target() -> TargetState {
    TargetState::new([168.0, 201.0], 85.0, 2.1, 1.0).unwrap()
}

#[test]
fn rank_one_tensor_is_recovered_exactly() {
    let scene = scene_with(vec![one_target()], 24, [8; 4]);
    let tensor = synthesize_echo(&scene, 3, true).unwrap();
    let f = cp_decompose(&tensor, 1, &CpConfig::default()).unwrap();
    assert!(f.fit_residual < 1e-8);
    let truth = &truth_columns(&scene, 0)[3];
    let c = f.component(0);
    for k in 0..3 {
        assert!(correlation(&c[k], &truth[k]) >= 1.0 - 1e-8);
    }
}

#[test]
fn reported_fit_matches_reconstruction() {
    let scene = Scene::reference().with_waveform(wave(24)).unwrap().with_snr_db(10.0);
    let tensor = synthesize_echo(&scene, 0, false).unwrap();
    let f = cp_decompose(&tensor, 3, &CpConfig::default()).unwrap();
    assert!((relative_residual(&tensor, &f) - f.fit_residual).abs() <= 1e-10);
    assert_eq!(f.u_mat.ncols(), 3);
    assert_eq!(f.v_mat.nrows(), 24);
}

#[test]
fn fit_decreases_every_sweep_at_zero_db() {
    let scene = Scene::reference().with_waveform(wave(32)).unwrap();
    let tensor = synthesize_echo(&scene, 1, false).unwrap();
    let cfg = CpConfig {
        restarts: 1,
        spectral_init: false,
        ..CpConfig::default()
    };
    let f = cp_decompose(&tensor, 3, &cfg).unwrap();
    assert!(f.fit_history.len() >= 2);
    for w in f.fit_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "fit rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn cp_is_deterministic_per_seed() {
    let scene = Scene::reference().with_waveform(wave(16)).unwrap();
    let tensor = synthesize_echo(&scene, 2, false).unwrap();
    let cfg = CpConfig::default();
    assert_eq!(cp_decompose(&tensor, 3, &cfg).unwrap(), cp_decompose(&tensor, 3, &cfg).unwrap());
}

#[test]
fn coarse_range_brackets_truth() {
    let mut w = wave(128);
    w.subcarrier_spacing_hz = 30e3;
    let col = delay_steering(150.0, 128, &w);
    let c = coarse_range(&col, &w, 512).unwrap();
    assert!(c.interval_m[0] <= 150.0 && 150.0 <= c.interval_m[1]);
    assert!((SPEED_OF_LIGHT / (2.0 * 30e3) - 4996.54).abs() < 0.01);
    assert!(coarse_range(&col, &w, 64).is_err());
}

#[test]
fn music_peak_is_sharp_and_scale_invariant() {
    let w = wave(128);
    let r = 150.37;
    let col = delay_steering(r, 128, &w);
    let c = coarse_range(&col, &w, 512).unwrap();
    let est = music_refine(&col, &w, c.interval_m, 0.01).unwrap();
    assert!((est - r).abs() <= 0.01);
    let spec = music_spectrum(&col, &w, &[r, r - 5.0, r + 5.0]);
    assert!(10.0 * (spec[0] / spec[1]).log10() > 20.0);
    assert!(10.0 * (spec[0] / spec[2]).log10() > 20.0);
    let scaled: Vec<Complex64> = col.iter().map(|z| z * Complex64::new(-3.0, 0.7)).collect();
    assert_eq!(music_refine(&scaled, &w, c.interval_m, 0.01).unwrap(), est);
    assert!(music_refine(&col, &w, [160.0, 150.0], 0.01).is_err());
}

#[test]
fn single_target_association_is_identity() {
    let t = one_target();
    let ranges: Vec<Vec<f64>> = CORNERS.iter().map(|c| vec![distance(*c, t.position_m) + 0.3]).collect();
    let out = associate(&ranges, &CORNERS, &AssociationConfig::default()).unwrap();
    assert!(out.permutations.iter().all(|p| p == &vec![0]));
    let flat: Vec<f64> = ranges.iter().map(|r| r[0]).collect();
    let fix = multilaterate(&CORNERS, &flat, None, 100).unwrap();
    assert!((out.association_cost - fix.ssr).abs() <= 1e-9 * fix.ssr.max(1e-12));
}

#[test]
fn swapped_columns_get_compensating_permutation() {
    let targets = [[150.0, 140.0], [205.0, 212.0], [180.0, 160.0]];
    let ranges: Vec<Vec<f64>> = CORNERS.iter().map(|c| targets.iter().map(|t| distance(*c, *t)).collect()).collect();
    let base = associate(&ranges, &CORNERS, &AssociationConfig::default()).unwrap();
    let mut swapped = ranges.clone();
    swapped[2].swap(0, 2);
    let out = associate(&swapped, &CORNERS, &AssociationConfig::default()).unwrap();
    assert_eq!(out.ranges_m, base.ranges_m);
    assert_eq!(out.permutations[2], vec![2, 1, 0]);
    for p in &out.permutations {
        let mut s = p.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
    }
    assert!(associate(&ranges[..1], &CORNERS[..1], &AssociationConfig::default()).is_err());
}

#[test]
fn noiseless_two_target_association_recovers_ranges() {
    let targets = vec![
        TargetState::new([140.0, 150.0], 90.0, 0.5, 1.0).unwrap(),
        TargetState::new([210.0, 205.0], 100.0, 2.5, 1.0).unwrap(),
    ];
    let scene = scene_with(targets.clone(), 64, [8; 4]);
    let tensors: Vec<_> = (0..4).map(|l| synthesize_echo(&scene, l, true).unwrap()).collect();
    let stage = stage_one(&scene, &tensors, &SensingConfig::default()).unwrap();
    let a = &stage.association;
    assert!(a.association_cost < 1e-3);
    let fits = |order: [usize; 2]| {
        (0..4).all(|l| (0..2).all(|u| (a.ranges_m[l][u] - distance(CORNERS[l], targets[order[u]].position_m)).abs() < 0.05))
    };
    assert!(fits([0, 1]) || fits([1, 0]));
}

fn noisy_tone(rng: &mut ChaCha8Rng, n: usize, variance: f64) -> Vec<Complex64> {
    let s = (variance / 2.0).sqrt();
    (0..n)
        .map(|k| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::from_polar(1.3, 0.417 * k as f64 + 0.2) + Complex64::new(re * s, im * s)
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
}

#[test]
fn noise_estimate_monte_carlo() {
    let pure: Vec<Complex64> = (0..128).map(|k| Complex64::from_polar(2.0, 0.9 * k as f64)).collect();
    assert!(estimate_noise_variance(&pure) <= 1e-12);
    let mut single = Vec::new();
    let mut ratios = Vec::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = estimate_noise_variance(&noisy_tone(&mut rng, 128, 0.01));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = estimate_noise_variance(&noisy_tone(&mut rng, 128, 0.02));
        single.push(a);
        ratios.push(b / a);
    }
    let m = median(single);
    assert!((m - 0.01).abs() / 0.01 < 0.3, "median {m}");
    let r = median(ratios);
    assert!((1.6..=2.4).contains(&r), "ratio {r}");
}

proptest! {
    #[test]
    fn weights_sum_to_one_and_ignore_common_scale(s in prop::collection::vec(1e-6f64..10.0, 2..8), k in 1e-3f64..1e3) {
        let w = mrc_weights(&s);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
        for (a, b) in w.iter().zip(mrc_weights(&scaled)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn truth_maximizes_noiseless_traces(dx in -20.0f64..20.0, dy in -20.0f64..20.0, dv in -30.0f64..30.0, dh in -1.0f64..1.0) {
        let scene = scene_with(vec![one_target()], 16, [8, 4, 6, 8]);
        let t = scene.targets()[0].clone();
        let fusion = build_fusion(&truth_columns(&scene, 0), &[1.0; 4]).unwrap();
        let aps = scene.ap_positions();
        let w = scene.waveform();
        let at = fusion.localization_trace(t.position_m, &aps, w);
        let off = fusion.localization_trace([t.position_m[0] + dx, t.position_m[1] + dy], &aps, w);
        prop_assert!(at >= off - 1e-9);
        let vt = fusion.velocity_trace(t.speed_mps, t.heading_rad, t.position_m, &aps, w);
        let voff = fusion.velocity_trace((t.speed_mps + dv).max(0.0), t.heading_rad + dh, t.position_m, &aps, w);
        prop_assert!(vt >= voff - 1e-9);
    }
}

#[test]
fn fusion_weights_and_padding() {
    let scene = scene_with(vec![one_target()], 16, [8, 4, 6, 8]);
    let cols = truth_columns(&scene, 0);
    let f = build_fusion(&cols, &[0.5; 4]).unwrap();
    assert!(f.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    assert_eq!(f.psi, 8);
    for j in 4..8 {
        assert_eq!(f.k_tilde[(1, j)], Complex64::new(0.0, 0.0));
    }
    for j in 6..8 {
        assert_eq!(f.k_tilde[(2, j)], Complex64::new(0.0, 0.0));
    }
    let g = build_fusion(&cols, &[1.0, 1.0, 10.0, 1.0]).unwrap();
    assert!((g.weights[2] * 10.0 - g.weights[0]).abs() < 1e-15);
    assert!(build_fusion(&cols[..1], &[1.0]).is_err());
}

#[test]
fn noiseless_traces_reach_their_maxima_at_truth() {
    let scene = scene_with(vec![one_target()], 16, [8, 4, 6, 8]);
    let t = scene.targets()[0].clone();
    let aps = scene.ap_positions();
    let w = scene.waveform();
    let f = build_fusion(&truth_columns(&scene, 0), &[1.0, 2.0, 0.5, 1.0]).unwrap();
    let loc = f.localization_trace(t.position_m, &aps, w);
    let expected: f64 = f.weights.iter().zip([8.0, 4.0, 6.0, 8.0]).map(|(wl, na)| wl * (16.0 + na)).sum();
    assert!((loc - expected).abs() <= 1e-9 * expected);
    assert!((loc - f.max_localization_trace()).abs() <= 1e-9 * expected);
    let obj_truth = localization_objective(t.position_m, &f, &aps, w).unwrap();
    let obj_off = localization_objective([t.position_m[0] + 5.0, t.position_m[1] + 5.0], &f, &aps, w).unwrap();
    assert!(obj_truth <= obj_off);
    let vel = f.velocity_trace(t.speed_mps, t.heading_rad, t.position_m, &aps, w);
    assert!((vel - 16.0).abs() <= 1e-9 * 16.0);
    let v0 = velocity_objective([t.speed_mps, t.heading_rad], &f, t.position_m, &aps, w).unwrap();
    let v1 = velocity_objective([t.speed_mps, t.heading_rad + TAU], &f, t.position_m, &aps, w).unwrap();
    assert!((v0 - v1).abs() <= 1e-9 * v0);
    assert!(localization_objective(t.position_m, &f, &aps[..3], w).is_err());
}

#[test]
fn zero_speed_hides_heading() {
    let t = TargetState::new([168.0, 201.0], 0.0, 0.0, 1.0).unwrap();
    let scene = scene_with(vec![t.clone()], 16, [8; 4]);
    let aps = scene.ap_positions();
    let f = build_fusion(&truth_columns(&scene, 0), &[1.0; 4]).unwrap();
    let a = velocity_objective([0.0, 0.3], &f, t.position_m, &aps, scene.waveform()).unwrap();
    let b = velocity_objective([0.0, 4.1], &f, t.position_m, &aps, scene.waveform()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ap_swap_and_common_scale_leave_objective_shape() {
    let scene = scene_with(vec![one_target()], 16, [8; 4]);
    let aps = scene.ap_positions();
    let w = scene.waveform();
    let cols = truth_columns(&scene, 0);
    let f = build_fusion(&cols, &[1.0; 4]).unwrap();
    let mut rev_cols = cols.clone();
    rev_cols.reverse();
    let mut rev_aps = aps.clone();
    rev_aps.reverse();
    let g = build_fusion(&rev_cols, &[1.0; 4]).unwrap();
    let probe = [171.0, 197.0];
    let a = localization_objective(probe, &f, &aps, w).unwrap();
    let b = localization_objective(probe, &g, &rev_aps, w).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
    let mut scaled = f.clone();
    scaled.s_tilde *= Complex64::new(3.0, 0.0);
    scaled.k_tilde *= Complex64::new(3.0, 0.0);
    scaled.t_tilde *= Complex64::new(3.0, 0.0);
    for p in [probe, [150.0, 150.0], scene.targets()[0].position_m] {
        let ratio = f.localization_trace(p, &aps, w) * 3.0 / scaled.localization_trace(p, &aps, w);
        assert!((ratio - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pipeline_needs_every_ap_tensor() {
    let scene = Scene::reference().with_waveform(wave(16)).unwrap();
    let one = vec![synthesize_echo(&scene, 0, true).unwrap()];
    assert!(matches!(sl_mdts(&scene, &one, &SensingConfig::default()), Err(Error::Precondition(_))));
}

#[test]
fn noiseless_pipeline_at_reduced_size() {
    let scene = Scene::reference().with_waveform(wave(32)).unwrap();
    let rep = sense_scene(&scene, true, &SensingConfig::default()).unwrap();
    assert_eq!(rep.estimates.len(), 3);
    for t in scene.targets() {
        let e = rep
            .estimates
            .iter()
            .min_by(|a, b| distance(a.position_m, t.position_m).total_cmp(&distance(b.position_m, t.position_m)))
            .unwrap();
        assert!(distance(e.position_m, t.position_m) < 0.1);
        assert!((e.speed_mps - t.speed_mps).abs() < 0.5);
        assert!(e.detected && !e.failed);
    }
}
