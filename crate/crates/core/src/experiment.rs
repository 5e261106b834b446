//! Seeded Monte-Carlo runs over an SNR grid, ARMSE aggregation and result
//! files.

use std::fmt;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{lattice_estimates, mle_estimates, LatticeConfig};
use crate::crb::crb_pair;
use crate::echo::synthesize_echo;
use crate::error::{Error, Result};
use crate::scene::{distance, wrap_to_pi, Scene, TargetState};
use crate::sensing::{estimate_targets, stage_one, SensingConfig, StageOne, TargetEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SfoAbc,
    SfoAbcBfgs,
    Lattice,
    Mle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SfoAbc, Method::SfoAbcBfgs, Method::Lattice, Method::Mle];

    pub fn name(self) -> &'static str {
        match self {
            Method::SfoAbc => "sfo_abc",
            Method::SfoAbcBfgs => "sfo_abc_bfgs",
            Method::Lattice => "lattice",
            Method::Mle => "mle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub scene: Scene,
    pub snr_grid_db: Vec<f64>,
    pub num_trials: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Skip noise synthesis; the SNR grid then only labels rows.
    pub noiseless: bool,
    pub sensing: SensingConfig,
    pub lattice: LatticeConfig,
    /// Directory for result files when the caller gives none.
    pub output_dir: Option<String>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scene: Scene::reference(),
            snr_grid_db: (0..9).map(|k| -10.0 + 5.0 * k as f64).collect(),
            num_trials: 10,
            methods: Method::ALL.to_vec(),
            master_seed: 0,
            noiseless: false,
            sensing: SensingConfig::default(),
            lattice: LatticeConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || !self.snr_grid_db.iter().all(|s| s.is_finite()) {
            return Err(Error::Config("snr_grid_db must be a nonempty list of finite values".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.sensing.validate()?;
        self.lattice.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment plan: {e}")))
    }

    /// Seed of trial `trial`, shared by every SNR so that grid points differ
    /// only in noise level.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trial as u64);
        rng.next_u64()
    }
}

/// Errors of one matched estimate against its true target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetError {
    pub position_m: f64,
    pub speed_mps: Option<f64>,
    pub heading_rad: Option<f64>,
    /// Magnitude of the velocity vector error, m/s.
    pub velocity_mps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub method: Method,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    /// Per true target, `None` when the trial failed.
    pub errors: Option<Vec<TargetError>>,
}

impl TrialRecord {
    pub fn mean_position_error(&self) -> Option<f64> {
        let e = self.errors.as_ref()?;
        Some(e.iter().map(|t| t.position_m).sum::<f64>() / e.len() as f64)
    }

    pub fn mean_speed_error(&self) -> Option<f64> {
        let e = self.errors.as_ref()?;
        let s: Option<Vec<f64>> = e.iter().map(|t| t.speed_mps).collect();
        s.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_velocity_error(&self) -> Option<f64> {
        let e = self.errors.as_ref()?;
        let s: Option<Vec<f64>> = e.iter().map(|t| t.velocity_mps).collect();
        s.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    pub snr_db: f64,
    pub armse_position_m: f64,
    pub armse_speed: Option<f64>,
    pub armse_heading: Option<f64>,
    pub crb_sqrt_position_m: Option<f64>,
    pub crb_sqrt_velocity: Option<f64>,
    pub trials_used: usize,
    pub trials_failed: usize,
    pub armse_velocity_mps: Option<f64>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for i in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(i, n - 1);
            out.push(p);
        }
    }
    out
}

/// Assigns estimated positions to true targets minimizing the summed
/// distance; `result[u]` is the estimate matched to target `u`.
pub fn match_estimates(estimates: &[[f64; 2]], truth: &[TargetState]) -> Result<Vec<usize>> {
    if estimates.len() != truth.len() {
        return Err(Error::Precondition(format!(
            "{} estimates for {} targets",
            estimates.len(),
            truth.len()
        )));
    }
    let best = permutations(truth.len())
        .into_iter()
        .map(|p| {
            let cost: f64 = p
                .iter()
                .zip(truth)
                .map(|(&k, t)| distance(estimates[k], t.position_m))
                .sum();
            (cost, p)
        })
        .fold(None::<(f64, Vec<usize>)>, |acc, (c, p)| match acc {
            Some((bc, _)) if bc <= c => acc,
            _ => Some((c, p)),
        });
    Ok(best.map(|b| b.1).unwrap_or_default())
}

/// `‖v̂ − v‖` between velocity vectors built from speed and heading.
pub fn velocity_error(est: &TargetEstimate, truth: &TargetState) -> f64 {
    let (se, ce) = est.heading_rad.sin_cos();
    let (st, ct) = truth.heading_rad.sin_cos();
    (est.speed_mps * ce - truth.speed_mps * ct).hypot(est.speed_mps * se - truth.speed_mps * st)
}

fn sfo_errors(estimates: &[TargetEstimate], truth: &[TargetState]) -> Result<Vec<TargetError>> {
    if estimates.iter().any(|e| e.failed) {
        return Err(Error::DegenerateInput("an estimator flagged a failed target".into()));
    }
    let pos: Vec<[f64; 2]> = estimates.iter().map(|e| e.position_m).collect();
    let assignment = match_estimates(&pos, truth)?;
    Ok(assignment
        .iter()
        .zip(truth)
        .map(|(&k, t)| {
            let e = &estimates[k];
            TargetError {
                position_m: distance(e.position_m, t.position_m),
                speed_mps: Some((e.speed_mps - t.speed_mps).abs()),
                heading_rad: Some(wrap_to_pi(e.heading_rad - t.heading_rad).abs()),
                velocity_mps: Some(velocity_error(e, t)),
            }
        })
        .collect())
}

fn method_errors(method: Method, stage: &StageOne, scene: &Scene, plan: &ExperimentPlan) -> Result<Vec<TargetError>> {
    let truth = scene.targets();
    match method {
        Method::SfoAbc | Method::SfoAbcBfgs => {
            let cfg = SensingConfig {
                refine: method == Method::SfoAbcBfgs,
                ..plan.sensing.clone()
            };
            sfo_errors(&estimate_targets(stage, scene, &cfg), truth)
        }
        Method::Lattice => sfo_errors(&lattice_estimates(stage, scene, &plan.sensing, &plan.lattice)?, truth),
        Method::Mle => {
            let fixes = mle_estimates(stage, scene)?;
            let pos: Vec<[f64; 2]> = fixes.iter().map(|f| f.position_m).collect();
            let assignment = match_estimates(&pos, truth)?;
            Ok(assignment
                .iter()
                .zip(truth)
                .map(|(&k, t)| TargetError {
                    position_m: distance(pos[k], t.position_m),
                    speed_mps: None,
                    heading_rad: None,
                    velocity_mps: None,
                })
                .collect())
        }
    }
}

/// Every (SNR, trial, method) outcome in that nesting order. Stage-one
/// processing is shared by all methods of a trial; a failing trial is
/// recorded with `errors: None` and the sweep continues.
pub fn run_trials(plan: &ExperimentPlan) -> Result<Vec<TrialRecord>> {
    plan.validate()?;
    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();
    let mut records = Vec::with_capacity(plan.snr_grid_db.len() * plan.num_trials * methods.len());
    for &snr in &plan.snr_grid_db {
        for trial in 0..plan.num_trials {
            let seed = plan.trial_seed(trial);
            let scene = plan.scene.with_seed(seed).with_snr_db(snr);
            let stage = (0..scene.num_aps())
                .map(|l| synthesize_echo(&scene, l, plan.noiseless))
                .collect::<Result<Vec<_>>>()
                .and_then(|tensors| stage_one(&scene, &tensors, &plan.sensing));
            for &method in &methods {
                let errors = stage
                    .as_ref()
                    .ok()
                    .and_then(|s| method_errors(method, s, &scene, plan).ok());
                records.push(TrialRecord {
                    method,
                    snr_db: snr,
                    trial,
                    seed,
                    errors,
                });
            }
        }
    }
    Ok(records)
}

fn armse(per_target: &[Vec<f64>]) -> Option<f64> {
    if per_target.is_empty() || per_target.iter().any(|v| v.is_empty()) {
        return None;
    }
    let rmse: Vec<f64> = per_target
        .iter()
        .map(|v| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt())
        .collect();
    Some(rmse.iter().sum::<f64>() / rmse.len() as f64)
}

/// Mean over targets of √tr CRB at the plan's geometry and a given SNR.
fn crb_reference(scene: &Scene) -> (Option<f64>, Option<f64>) {
    let antennas = scene.antenna_counts();
    let pairs: Option<Vec<_>> = (0..scene.num_targets())
        .map(|u| crb_pair(scene, u, &antennas).ok())
        .collect();
    match pairs {
        Some(p) if !p.is_empty() => {
            let n = p.len() as f64;
            (
                Some(p.iter().map(|c| c.trace_position().sqrt()).sum::<f64>() / n),
                Some(p.iter().map(|c| c.trace_velocity().sqrt()).sum::<f64>() / n),
            )
        }
        _ => (None, None),
    }
}

/// ARMSE rows ordered by method, then SNR as listed in the plan.
pub fn aggregate(plan: &ExperimentPlan, records: &[TrialRecord]) -> Vec<MetricRow> {
    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();
    let u = plan.scene.num_targets();
    let mut rows = Vec::new();
    for &method in &methods {
        for &snr in &plan.snr_grid_db {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == method && r.snr_db == snr)
                .collect();
            let used: Vec<&Vec<TargetError>> = group.iter().filter_map(|r| r.errors.as_ref()).collect();
            let column = |f: &dyn Fn(&TargetError) -> Option<f64>| -> Option<Vec<Vec<f64>>> {
                (0..u).map(|k| used.iter().map(|e| f(&e[k])).collect()).collect()
            };
            let armse_position_m = column(&|e| Some(e.position_m))
                .and_then(|c| armse(&c))
                .unwrap_or(f64::NAN);
            let (crb_p, crb_v) = crb_reference(&plan.scene.with_snr_db(snr));
            rows.push(MetricRow {
                method,
                snr_db: snr,
                armse_position_m,
                armse_speed: column(&|e| e.speed_mps).and_then(|c| armse(&c)),
                armse_heading: column(&|e| e.heading_rad).and_then(|c| armse(&c)),
                crb_sqrt_position_m: crb_p,
                crb_sqrt_velocity: crb_v,
                trials_used: used.len(),
                trials_failed: group.len() - used.len(),
                armse_velocity_mps: column(&|e| e.velocity_mps).and_then(|c| armse(&c)),
            });
        }
    }
    rows
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<MetricRow>> {
    let records = run_trials(plan)?;
    Ok(aggregate(plan, &records))
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        round_sig9(x).to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub const METRIC_COLUMNS: [&str; 10] = [
    "method",
    "snr_db",
    "armse_position_m",
    "armse_speed",
    "armse_heading",
    "crb_sqrt_position_m",
    "crb_sqrt_velocity",
    "trials_used",
    "trials_failed",
    "armse_velocity_mps",
];

/// Renders rows as CSV (header + records) or a JSON array, with numbers at
/// 9 significant digits and a trailing newline.
pub fn format_results(rows: &[MetricRow], format: OutputFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Precondition("no result rows to emit".into()));
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Parse(format!("CSV encoding: {e}"));
            w.write_record(METRIC_COLUMNS).map_err(io)?;
            for r in rows {
                w.write_record([
                    r.method.name().to_string(),
                    fmt_sig9(r.snr_db),
                    fmt_sig9(r.armse_position_m),
                    fmt_opt(r.armse_speed),
                    fmt_opt(r.armse_heading),
                    fmt_opt(r.crb_sqrt_position_m),
                    fmt_opt(r.crb_sqrt_velocity),
                    r.trials_used.to_string(),
                    r.trials_failed.to_string(),
                    fmt_opt(r.armse_velocity_mps),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(format!("CSV encoding: {e}")))?;
            Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
        }
        OutputFormat::Json => {
            let rounded: Vec<MetricRow> = rows
                .iter()
                .map(|r| MetricRow {
                    snr_db: round_sig9(r.snr_db),
                    armse_position_m: round_sig9(r.armse_position_m),
                    armse_speed: r.armse_speed.map(round_sig9),
                    armse_heading: r.armse_heading.map(round_sig9),
                    crb_sqrt_position_m: r.crb_sqrt_position_m.map(round_sig9),
                    crb_sqrt_velocity: r.crb_sqrt_velocity.map(round_sig9),
                    armse_velocity_mps: r.armse_velocity_mps.map(round_sig9),
                    ..r.clone()
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rounded).map_err(|e| Error::Parse(format!("JSON encoding: {e}")))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes the formatted rows to `path`.
pub fn emit_results(rows: &[MetricRow], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = format_results(rows, format)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses CSV produced by [`format_results`].
pub fn parse_results_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let perr = |e: String| Error::Parse(format!("results CSV: {e}"));
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|e: std::num::ParseFloatError| perr(e.to_string())) };
    let opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != METRIC_COLUMNS.len() {
            return Err(perr(format!("expected {} fields, got {}", METRIC_COLUMNS.len(), rec.len())));
        }
        let method = Method::ALL
            .into_iter()
            .find(|m| m.name() == &rec[0])
            .ok_or_else(|| perr(format!("unknown method {}", &rec[0])))?;
        rows.push(MetricRow {
            method,
            snr_db: num(&rec[1])?,
            armse_position_m: num(&rec[2])?,
            armse_speed: opt(&rec[3])?,
            armse_heading: opt(&rec[4])?,
            crb_sqrt_position_m: opt(&rec[5])?,
            crb_sqrt_velocity: opt(&rec[6])?,
            trials_used: rec[7].parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
            trials_failed: rec[8].parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
            armse_velocity_mps: opt(&rec[9])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(fmt_sig9(1234567891234.0), "1234567890000");
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn permutations_cover_all_orders() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn trial_seeds_differ() {
        let plan = ExperimentPlan::default();
        assert_ne!(plan.trial_seed(0), plan.trial_seed(1));
        assert_eq!(plan.trial_seed(3), plan.trial_seed(3));
    }
}
