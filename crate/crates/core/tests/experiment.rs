use cfsense_core::experiment::{
    emit_results, format_results, match_estimates, parse_results_csv, run_experiment, ExperimentPlan, Method, MetricRow, OutputFormat,
    METRIC_COLUMNS,
};
use cfsense_core::{Error, TargetState, WaveformConfig};
use proptest::prelude::*;

fn row(method: Method, snr: f64) -> MetricRow {
    MetricRow {
        method,
        snr_db: snr,
        armse_position_m: 0.123456789123,
        armse_speed: Some(1.0 / 3.0),
        armse_heading: None,
        crb_sqrt_position_m: Some(2.5e-7),
        crb_sqrt_velocity: Some(12345.678901234),
        trials_used: 9,
        trials_failed: 1,
        armse_velocity_mps: Some(0.5),
    }
}

fn small_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::default();
    let mut w = plan.scene.waveform().clone();
    w.num_subcarriers = 32;
    w.num_symbols = 32;
    plan.scene = plan.scene.with_waveform(w).unwrap();
    plan.snr_grid_db = vec![10.0];
    plan.num_trials = 2;
    plan.methods = vec![Method::SfoAbcBfgs, Method::Mle];
    plan.master_seed = 5;
    plan
}

#[test]
fn default_waveform_parameters() {
    let plan = ExperimentPlan::default();
    let w: &WaveformConfig = plan.scene.waveform();
    assert_eq!(w.carrier_freq_hz, 3.5e9);
    assert_eq!(w.subcarrier_spacing_hz, 30e3);
    assert_eq!((w.num_subcarriers, w.num_symbols), (128, 128));
    assert_eq!(plan.scene.num_aps(), 4);
    assert_eq!(plan.scene.num_targets(), 3);
}

#[test]
fn empty_rows_are_rejected() {
    assert!(matches!(format_results(&[], OutputFormat::Csv), Err(Error::Precondition(_))));
    assert!(matches!(format_results(&[], OutputFormat::Json), Err(Error::Precondition(_))));
}

#[test]
fn one_row_gives_header_and_record() {
    let text = format_results(&[row(Method::Lattice, 20.0)], OutputFormat::Csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRIC_COLUMNS.join(","));
    assert!(text.ends_with('\n'));
    assert!(lines[1].starts_with("lattice,20,0.123456789,0.333333333,,0.00000025,12345.6789,9,1,0.5"));
    let json = format_results(&[row(Method::Lattice, 20.0)], OutputFormat::Json).unwrap();
    assert!(json.ends_with('\n'));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed[0]["armse_position_m"], 0.123456789);
    assert_eq!(parsed[0]["method"], "lattice");
}

#[test]
fn csv_round_trips_at_nine_digits() {
    let rows = vec![row(Method::SfoAbc, -10.0), row(Method::Mle, 30.0)];
    let text = format_results(&rows, OutputFormat::Csv).unwrap();
    let back = parse_results_csv(&text).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.method, b.method);
        assert_eq!(a.trials_used, b.trials_used);
        assert!((a.armse_position_m - b.armse_position_m).abs() <= 1e-9 * a.armse_position_m);
        assert_eq!(a.armse_heading, b.armse_heading);
        assert!((a.crb_sqrt_velocity.unwrap() - b.crb_sqrt_velocity.unwrap()).abs() <= 1e-9 * a.crb_sqrt_velocity.unwrap());
    }
    assert_eq!(format_results(&back, OutputFormat::Csv).unwrap(), text);
}

#[test]
fn unwritable_path_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("metrics.csv");
    match emit_results(&[row(Method::Mle, 0.0)], OutputFormat::Csv, &path) {
        Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("metrics.csv")),
        other => panic!("expected I/O error, got {other:?}"),
    }
    let ok = dir.path().join("metrics.json");
    emit_results(&[row(Method::Mle, 0.0)], OutputFormat::Json, &ok).unwrap();
    assert!(std::fs::read_to_string(ok).unwrap().ends_with("\n"));
}

proptest! {
    #[test]
    fn matching_is_a_bijection(pts in prop::collection::vec((100.0f64..250.0, 100.0f64..250.0), 1..5), shift in 0usize..5) {
        let truth: Vec<TargetState> = pts.iter().map(|p| TargetState::new([p.0, p.1], 0.0, 0.0, 1.0).unwrap()).collect();
        let n = truth.len();
        let est: Vec<[f64; 2]> = (0..n).map(|i| truth[(i + shift) % n].position_m).collect();
        let m = match_estimates(&est, &truth).unwrap();
        let mut seen = m.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for (u, k) in m.iter().enumerate() {
            prop_assert_eq!(est[*k], truth[u].position_m);
        }
    }
}

#[test]
fn plan_validation_and_parsing() {
    let plan = ExperimentPlan::from_json(r#"{"num_trials": 3, "methods": ["mle", "lattice"]}"#).unwrap();
    assert_eq!(plan.num_trials, 3);
    assert_eq!(plan.methods, vec![Method::Mle, Method::Lattice]);
    assert!(ExperimentPlan::from_json(r#"{"methods": ["bogus"]}"#).is_err());
    let zero = ExperimentPlan {
        num_trials: 0,
        ..ExperimentPlan::default()
    };
    assert!(matches!(run_experiment(&zero), Err(Error::Config(_))));
    let empty = ExperimentPlan {
        snr_grid_db: vec![],
        ..ExperimentPlan::default()
    };
    assert!(empty.validate().is_err());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let plan = small_plan();
    let a = format_results(&run_experiment(&plan).unwrap(), OutputFormat::Csv).unwrap();
    let b = format_results(&run_experiment(&plan).unwrap(), OutputFormat::Csv).unwrap();
    assert_eq!(a, b);
    let rows = parse_results_csv(&a).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.trials_used + r.trials_failed == 2 && r.armse_position_m >= 0.0));
}

#[test]
fn single_noiseless_trial_is_accurate() {
    let plan = ExperimentPlan {
        num_trials: 1,
        noiseless: true,
        snr_grid_db: vec![30.0],
        methods: vec![Method::SfoAbcBfgs],
        ..ExperimentPlan::default()
    };
    let rows = run_experiment(&plan).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].trials_used, 1);
    assert!(rows[0].armse_position_m < 0.1);
    assert!(rows[0].crb_sqrt_position_m.is_some_and(|c| c > 0.0));
}
