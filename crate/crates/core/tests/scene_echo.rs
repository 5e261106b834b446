use std::f64::consts::{FRAC_PI_2, PI, TAU};

use cfsense_core::echo::{doppler_shift, noise_tensor, path_gain, rcs_draws, steering_rx, synthesize_echo, synthesize_echo_with_rcs};
use cfsense_core::scene::{distance, SPEED_OF_LIGHT};
use cfsense_core::{ApNode, Error, Scene, TargetState, WaveformConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn small_wave() -> WaveformConfig {
    let mut w = WaveformConfig::nr_3p5ghz();
    w.num_subcarriers = 16;
    w.num_symbols = 12;
    w
}

fn corner_aps(antennas: usize) -> Vec<ApNode> {
    [[0.0, 0.0], [350.0, 0.0], [0.0, 350.0], [350.0, 350.0]]
        .into_iter()
        .map(|p| ApNode::new(p, antennas).unwrap())
        .collect()
}

#[test]
fn steering_at_broadside_is_all_ones() {
    let w = WaveformConfig::nr_3p5ghz();
    for s in steering_rx(0.0, 4, &w) {
        assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn steering_at_endfire_half_wavelength() {
    let mut w = WaveformConfig::nr_3p5ghz();
    w.antenna_spacing_m = 0.5 * w.wavelength();
    let s = steering_rx(FRAC_PI_2, 2, &w);
    assert!((s[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    assert!((s[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
}

proptest! {
    #[test]
    fn steering_entries_have_unit_modulus(theta in -10.0f64..10.0, n in 1usize..64) {
        let w = WaveformConfig::nr_3p5ghz();
        for s in steering_rx(theta, n, &w) {
            prop_assert!((s.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn path_gain_follows_inverse_square_amplitude(r in 1.0f64..2000.0) {
        let w = WaveformConfig::nr_3p5ghz();
        let ap = ApNode::new([0.0, 0.0], 4).unwrap();
        let near = TargetState::new([r, 0.0], 0.0, 0.0, 1.0).unwrap();
        let far = TargetState::new([2.0 * r, 0.0], 0.0, 0.0, 1.0).unwrap();
        let beta = Complex64::new(0.3, -0.7);
        let a1 = path_gain(&ap, &near, beta, &w).unwrap().norm();
        let a2 = path_gain(&ap, &far, beta, &w).unwrap().norm();
        prop_assert!((a1 / a2 - 4.0).abs() < 1e-12);
    }
}

#[test]
fn path_gain_zero_rcs_and_hand_value() {
    let w = WaveformConfig::nr_3p5ghz();
    let ap = ApNode::new([0.0, 0.0], 4).unwrap();
    let tgt = TargetState::new([100.0, 0.0], 0.0, 0.0, 1.0).unwrap();
    assert_eq!(path_gain(&ap, &tgt, Complex64::new(0.0, 0.0), &w).unwrap(), Complex64::new(0.0, 0.0));
    let lambda = SPEED_OF_LIGHT / 3.5e9;
    // λ / ((4π)^{3/2} r²)
    let expected = lambda / ((4.0 * PI).powf(1.5) * 1e4);
    let got = path_gain(&ap, &tgt, Complex64::new(1.0, 0.0), &w).unwrap().norm();
    assert!((got - expected).abs() / expected < 1e-12);
    let on_ap = TargetState::new([0.0, 0.0], 0.0, 0.0, 1.0).unwrap();
    assert!(matches!(path_gain(&ap, &on_ap, Complex64::new(1.0, 0.0), &w), Err(Error::Domain(_))));
}

#[test]
fn doppler_examples() {
    let w = WaveformConfig::nr_3p5ghz();
    let ap = ApNode::new([0.0, 0.0], 4).unwrap();
    let still = TargetState::new([100.0, 50.0], 0.0, 1.0, 1.0).unwrap();
    assert_eq!(doppler_shift(&ap, &still, &w), 0.0);
    let crossing = TargetState::new([100.0, 0.0], 100.0, FRAC_PI_2, 1.0).unwrap();
    assert!(doppler_shift(&ap, &crossing, &w).abs() < 1e-9);
    let receding = TargetState::new([100.0, 0.0], 100.0, 0.0, 1.0).unwrap();
    let expected = -2.0 * 3.5e9 * 100.0 / SPEED_OF_LIGHT;
    assert!((doppler_shift(&ap, &receding, &w) - expected).abs() < 1e-9);
    assert!((expected + 2334.95).abs() < 0.01);
}

#[test]
fn single_target_slices_have_rank_one() {
    let scene = Scene::new(
        small_wave(),
        corner_aps(6),
        vec![TargetState::new([150.0, 190.0], 60.0, 1.1, 1.0).unwrap()],
        5,
    )
    .unwrap();
    let t = synthesize_echo(&scene, 1, true).unwrap();
    let [na, nc, m] = t.dims();
    for p in 0..na {
        let slice = DMatrix::from_fn(nc, m, |n, k| t.get(p, n, k));
        let sv = slice.singular_values();
        assert!(sv[1] <= 1e-10 * sv[0]);
    }
}

#[test]
fn echo_is_deterministic_per_seed() {
    let scene = Scene::reference().with_waveform(small_wave()).unwrap();
    let a = synthesize_echo(&scene, 2, false).unwrap();
    let b = synthesize_echo(&scene, 2, false).unwrap();
    assert_eq!(a.data(), b.data());
    let c = synthesize_echo(&scene.with_seed(scene.rng_seed() + 1), 2, false).unwrap();
    assert_ne!(a.data(), c.data());
}

#[test]
fn two_targets_superpose() {
    let targets = vec![
        TargetState::new([140.0, 160.0], 80.0, 0.3, 1.0).unwrap(),
        TargetState::new([210.0, 200.0], 50.0, 2.0, 1.5).unwrap(),
    ];
    let scene = Scene::new(small_wave(), corner_aps(4), targets.clone(), 17).unwrap();
    let rcs = rcs_draws(&scene);
    for ap in 0..scene.num_aps() {
        let joint = synthesize_echo_with_rcs(&scene, ap, &rcs, true).unwrap();
        let mut sum = vec![Complex64::new(0.0, 0.0); joint.data().len()];
        for (u, t) in targets.iter().enumerate() {
            let single = scene.with_targets(vec![t.clone()]).unwrap();
            let part = synthesize_echo_with_rcs(&single, ap, &[rcs[u]], true).unwrap();
            for (s, z) in sum.iter_mut().zip(part.data()) {
                *s += z;
            }
        }
        let diff: f64 = joint.data().iter().zip(&sum).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff <= 1e-10 * joint.frobenius_norm());
    }
}

#[test]
fn delay_phase_advances_per_subcarrier() {
    let tgt = TargetState::new([180.0, 120.0], 30.0, 0.5, 1.0).unwrap();
    let scene = Scene::new(small_wave(), corner_aps(3), vec![tgt.clone()], 9).unwrap();
    let wave = scene.waveform();
    for ap in 0..scene.num_aps() {
        let t = synthesize_echo(&scene, ap, true).unwrap();
        let tau = 2.0 * distance(scene.aps()[ap].position_m, tgt.position_m) / SPEED_OF_LIGHT;
        let step = Complex64::from_polar(1.0, -TAU * wave.subcarrier_spacing_hz * tau);
        for n in 0..wave.num_subcarriers - 1 {
            let ratio = t.get(1, n + 1, 2) / t.get(1, n, 2);
            assert!((ratio / ratio.norm() - step).norm() < 1e-9);
        }
    }
}

#[test]
fn noise_variance_matches_configuration() {
    let mut w = WaveformConfig::nr_3p5ghz();
    w.noise_variance = 0.37;
    let scene = Scene::new(w, corner_aps(8), vec![TargetState::new([175.0, 175.0], 0.0, 0.0, 1.0).unwrap()], 123).unwrap();
    let noise = noise_tensor(&scene, 0).unwrap();
    let n = noise.data().len();
    assert!(n >= 100_000);
    let mean: Complex64 = noise.data().iter().sum::<Complex64>() / n as f64;
    let var: f64 = noise.data().iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
    assert!((var - 0.37).abs() / 0.37 < 0.02);
}

#[test]
fn scene_rejects_invalid_inputs() {
    let w = small_wave();
    assert!(Scene::new(w.clone(), corner_aps(4)[..1].to_vec(), vec![TargetState::new([1.0, 1.0], 0.0, 0.0, 1.0).unwrap()], 0).is_err());
    assert!(Scene::new(w.clone(), corner_aps(4), vec![], 0).is_err());
    assert!(Scene::new(w, corner_aps(4), vec![TargetState::new([0.0, 0.0], 0.0, 0.0, 1.0).unwrap()], 0).is_err());
    assert!(ApNode::new([0.0, 0.0], 0).is_err());
    assert!(TargetState::new([1.0, 1.0], -1.0, 0.0, 1.0).is_err());
}

#[test]
fn scene_file_round_trip() {
    let scene = Scene::reference().with_seed(77);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    scene.save(&path).unwrap();
    assert_eq!(Scene::load(&path).unwrap(), scene);
    let missing = dir.path().join("absent.json");
    match Scene::load(&missing) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("expected I/O error, got {other:?}"),
    }
}
