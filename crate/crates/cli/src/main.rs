//! `cfsense`: CRB evaluation, placement optimization, sensing and
//! benchmarking from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfsense_core::crb::crb_pair;
use cfsense_core::experiment::{format_results, round_sig9, ExperimentPlan, OutputFormat};
use cfsense_core::placement::{apply_decision, run_admm, sample_targets, AdmmConfig};
use cfsense_core::sensing::{sense_scene, SensingConfig};
use cfsense_core::{Error, Scene};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "cfsense", version, about = "Cooperative multi-AP ISAC sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Position and velocity CRB matrices for each target.
    Crb {
        #[command(flatten)]
        common: Common,
        /// Only this target (0-based).
        #[arg(long)]
        target: Option<usize>,
    },
    /// Joint AP placement and antenna allocation.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate target positions and velocities from synthesized echoes.
    Sense {
        #[command(flatten)]
        common: Common,
        /// Set the noise level to this SNR (dB) at the strongest echo.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        #[arg(long)]
        noiseless: bool,
    },
    /// Monte-Carlo benchmark over an SNR grid.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scene JSON; the built-in reference scene when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Subcommand configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

type Result<T> = std::result::Result<T, Error>;

/// Rounds every float in a JSON tree to 9 significant digits.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig9(x)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn json_text(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&round_json(v)).expect("JSON values serialize");
    s.push('\n');
    s
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        round_sig9(x).to_string()
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::Parse(format!("CSV encoding: {e}"));
    w.write_record(header).map_err(enc)?;
    for r in rows {
        w.write_record(r).map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(format!("CSV encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn load_scene(path: &Option<PathBuf>) -> Result<Scene> {
    match path {
        Some(p) => Scene::load(p),
        None => Ok(Scene::reference()),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
        None => Ok(T::default()),
    }
}

/// Writes `files` under `out`, or prints the first one when no directory
/// was given.
fn deliver(out: &Option<PathBuf>, files: Vec<(String, String)>) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            for (name, text) in &files {
                let path = dir.join(name);
                fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
            }
            let written: Vec<String> = files.iter().map(|(n, _)| dir.join(n).display().to_string()).collect();
            println!("{}", json!({ "written": written }));
            Ok(())
        }
        None => {
            print!("{}", files.first().map(|f| f.1.as_str()).unwrap_or(""));
            Ok(())
        }
    }
}

fn matrix_rows(m: &cfsense_core::crb::CrbPair) -> [[[f64; 2]; 2]; 2] {
    let p = m.crb_position;
    let v = m.crb_velocity;
    [
        [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]],
        [[v[(0, 0)], v[(0, 1)]], [v[(1, 0)], v[(1, 1)]]],
    ]
}

fn cmd_crb(c: &Common, target: Option<usize>) -> Result<()> {
    let scene = load_scene(&c.scene)?;
    let antennas = scene.antenna_counts();
    let indices: Vec<usize> = match target {
        Some(t) if t >= scene.num_targets() => {
            return Err(Error::Precondition(format!(
                "target index {t} out of range for {} targets",
                scene.num_targets()
            )))
        }
        Some(t) => vec![t],
        None => (0..scene.num_targets()).collect(),
    };
    let pairs = indices
        .iter()
        .map(|&u| crb_pair(&scene, u, &antennas).map(|p| (u, p)))
        .collect::<Result<Vec<_>>>()?;
    let format = c.format.map(OutputFormat::from).unwrap_or(OutputFormat::Json);
    let text = match format {
        OutputFormat::Json => json_text(json!({
            "targets": pairs.iter().map(|(u, p)| {
                let [mp, mv] = matrix_rows(p);
                json!({
                    "index": u,
                    "crb_position": mp,
                    "crb_velocity": mv,
                    "trace_position": p.trace_position(),
                    "trace_velocity": p.trace_velocity(),
                })
            }).collect::<Vec<_>>()
        })),
        OutputFormat::Csv => csv_text(
            &[
                "target", "crb_p_xx", "crb_p_xy", "crb_p_yy", "crb_v_00", "crb_v_01", "crb_v_11", "trace_position",
                "trace_velocity",
            ],
            &pairs
                .iter()
                .map(|(u, p)| {
                    let [mp, mv] = matrix_rows(p);
                    vec![
                        u.to_string(),
                        num(mp[0][0]),
                        num(mp[0][1]),
                        num(mp[1][1]),
                        num(mv[0][0]),
                        num(mv[0][1]),
                        num(mv[1][1]),
                        num(p.trace_position()),
                        num(p.trace_velocity()),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
    };
    deliver(&c.out, vec![(format!("crb.{}", format.extension()), text)])
}

fn cmd_optimize(c: &Common) -> Result<()> {
    let scene = load_scene(&c.scene)?;
    let mut config: AdmmConfig = load_config(&c.config)?;
    if let Some(s) = c.seed {
        config.rng_seed = s;
    }
    let samples = sample_targets(&config.samples, config.rng_seed)?;
    let outcome = run_admm(&scene, &config, &samples)?;
    let optimized = apply_decision(&scene, &outcome.z)?;
    let summary = json_text(json!({
        "initial_objective": outcome.initial_objective,
        "objective": outcome.objective,
        "iterations": outcome.iterations,
        "converged": outcome.converged,
        "improved": outcome.improved,
        "psi": outcome.psi,
        "positions_m": outcome.z.positions(),
        "antennas": outcome.z.antennas(),
    }));
    let format = c.format.map(OutputFormat::from).unwrap_or(OutputFormat::Csv);
    let history = match format {
        OutputFormat::Csv => csv_text(
            &[
                "iteration", "zeta_p", "phi_p", "upsilon_p", "zeta_d", "phi_d", "upsilon_d", "objective",
                "objective_rounded", "rho_1", "rho_2", "rho_3",
            ],
            &outcome
                .history()
                .iter()
                .map(|h| {
                    let mut row = vec![h.iteration.to_string()];
                    row.extend(h.residuals.as_array().iter().map(|v| num(*v)));
                    row.push(num(h.objective));
                    row.push(num(h.objective_rounded));
                    row.extend(h.rho.iter().map(|v| num(*v)));
                    row
                })
                .collect::<Vec<_>>(),
        )?,
        OutputFormat::Json => json_text(serde_json::to_value(outcome.history()).expect("history serializes")),
    };
    let mut scene_text = optimized.to_json();
    scene_text.push('\n');
    deliver(
        &c.out,
        vec![
            ("summary.json".into(), summary),
            ("optimized_scene.json".into(), scene_text),
            (format!("history.{}", format.extension()), history),
        ],
    )
}

fn cmd_sense(c: &Common, snr: Option<f64>, noiseless: bool) -> Result<()> {
    let mut scene = load_scene(&c.scene)?;
    if let Some(s) = c.seed {
        scene = scene.with_seed(s);
    }
    if let Some(db) = snr {
        if !db.is_finite() {
            return Err(Error::Config(format!("SNR must be finite, got {db}")));
        }
        scene = scene.with_snr_db(db);
    }
    let config: SensingConfig = load_config(&c.config)?;
    let report = sense_scene(&scene, noiseless, &config)?;
    let format = c.format.map(OutputFormat::from).unwrap_or(OutputFormat::Json);
    let text = match format {
        OutputFormat::Json => json_text(json!({
            "snr_db": if noiseless { Value::Null } else { json!(scene.snr_db()) },
            "report": serde_json::to_value(&report).expect("report serializes"),
        })),
        OutputFormat::Csv => csv_text(
            &[
                "target", "x_m", "y_m", "speed_mps", "heading_rad", "localization_objective", "velocity_objective",
                "normalized_trace", "detected", "failed",
            ],
            &report
                .estimates
                .iter()
                .enumerate()
                .map(|(u, e)| {
                    vec![
                        u.to_string(),
                        num(e.position_m[0]),
                        num(e.position_m[1]),
                        num(e.speed_mps),
                        num(e.heading_rad),
                        num(e.objective_values[0]),
                        num(e.objective_values[1]),
                        num(e.normalized_trace),
                        e.detected.to_string(),
                        e.failed.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
    };
    deliver(&c.out, vec![(format!("estimates.{}", format.extension()), text)])
}

fn cmd_bench(c: &Common) -> Result<()> {
    let mut plan: ExperimentPlan = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            ExperimentPlan::from_json(&text)?
        }
        None => ExperimentPlan::default(),
    };
    if c.scene.is_some() {
        plan.scene = load_scene(&c.scene)?;
    }
    if let Some(s) = c.seed {
        plan.master_seed = s;
    }
    let rows = cfsense_core::experiment::run_experiment(&plan)?;
    let format = c.format.map(OutputFormat::from).unwrap_or(OutputFormat::Csv);
    let text = format_results(&rows, format)?;
    let out = c.out.clone().or_else(|| plan.output_dir.as_ref().map(PathBuf::from));
    deliver(&out, vec![(format!("metrics.{}", format.extension()), text)])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Crb { common, target } => cmd_crb(&common, target),
        Command::Optimize { common } => cmd_optimize(&common),
        Command::Sense {
            common,
            snr,
            noiseless,
        } => cmd_sense(&common, snr, noiseless),
        Command::Bench { common } => cmd_bench(&common),
    }
}

fn report_error(kind: &str, message: &str, path: Option<&Path>) {
    let mut v = json!({ "error": kind, "message": message });
    if let Some(p) = path {
        v["path"] = json!(p.display().to_string());
    }
    eprintln!("{v}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            report_error("usage", msg.trim(), None);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let path = match &e {
                Error::Io { path, .. } => Some(path.as_path()),
                _ => None,
            };
            report_error(e.kind(), &e.to_string(), path);
            ExitCode::FAILURE
        }
    }
}
