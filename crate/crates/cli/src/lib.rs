//! Library side of the `retire` binary: config handling and the four
//! commands, each writing its outputs into a directory.

pub mod config;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use retirement_core::format::round_sig;
use retirement_core::simulator::{budget_check, simulate_paths, summarize_paths, write_paths_csv};
use retirement_core::verify::run_verification;
use retirement_core::{policy, CheckStatus, ModelParams, SolvedModel, Support, VerifyReport};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{set_param, validate, RunConfig, MAX_SWEEP_AXES};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const POLICY_FILE: &str = "policy.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PATHS_FILE: &str = "paths.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "verify.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("verification failed: {}", .0.join(", "))]
    VerificationFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed(_) => 1,
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<retirement_core::Error> for CliError {
    fn from(e: retirement_core::Error) -> Self {
        if e.is_validation() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Paths written by a command, in the order written.
pub type Written = Vec<PathBuf>;

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })
}

fn write_file(path: PathBuf, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<PathBuf, CliError> {
    let res = fs::File::create(&path).and_then(|file| {
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()
    });
    res.map_err(|source| CliError::Output { path: path.clone(), source })?;
    Ok(path)
}

fn write_json(path: PathBuf, v: &Value) -> Result<PathBuf, CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        writeln!(w)
    })
}

fn num(x: f64) -> Value {
    json!(round_sig(x))
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Creation time: `SOURCE_DATE_EPOCH` when set, the wall clock otherwise.
fn timestamp() -> Value {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .unwrap_or_else(|| chrono::Utc::now().timestamp());
    let at = chrono::DateTime::from_timestamp(secs, 0).map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    json!({ "unix": secs, "utc": at })
}

pub fn resolved_params(p: &ModelParams) -> Value {
    let support = match p.support() {
        Support::Subsidy(i) => json!({ "I": round_sig(i) }),
        Support::Level(l) => json!({ "L": round_sig(l) }),
    };
    json!({
        "r": num(p.r()),
        "mu": num(p.mu()),
        "sigma": num(p.sigma()),
        "rho": num(p.rho()),
        "gamma": num(p.gamma()),
        "delta": num(p.delta()),
        "y1": num(p.y1()),
        "y2": num(p.y2()),
        "support": support,
        "theta": num(p.theta()),
        "merton_k": num(p.merton_k()),
        "support_level": num(p.support_level()),
        "delta_tied_to_k": p.delta_tied_to_k(),
        "delta_equals_k": p.delta_equals_k(),
    })
}

pub fn solution_json(m: &SolvedModel) -> Value {
    let d = m.dual();
    let s = m.solution();
    json!({
        "regime": m.regime().as_str(),
        "z_bar": opt(m.z_bar()),
        "w_bar": opt(m.w_bar()),
        "j": opt(m.j()),
        "kink": num(d.kink),
        "m_plus": num(d.roots.m_plus),
        "m_minus": num(d.roots.m_minus),
        "a_coef": num(d.a_coef),
        "b_coef": num(d.b_coef),
        "threshold_residual_scaled": opt(s.scaled_residual),
    })
}

fn manifest(command: &str, cfg: &RunConfig, hash: &str, p: Option<&ModelParams>, m: Option<&SolvedModel>, outputs: &[PathBuf]) -> Value {
    let names: Vec<String> =
        outputs.iter().filter_map(|o| o.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    json!({
        "tool": "retire",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_hash": hash,
        "created": timestamp(),
        "config": cfg,
        "params": p.map_or(Value::Null, resolved_params),
        "solution": m.map_or(Value::Null, solution_json),
        "outputs": names,
    })
}

fn solve_model(cfg: &RunConfig) -> Result<(ModelParams, SolvedModel), CliError> {
    let p = cfg.model_params()?;
    let m = SolvedModel::solve_with(&p, cfg.regime_tol)?;
    Ok((p, m))
}

/// Solves the model and writes `policy.csv` and `manifest.json`.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Written, CliError> {
    let hash = cfg.hash();
    let (p, m) = solve_model(cfg)?;
    let rows = policy::policy_table(&m, &cfg.grid_spec())?;
    create_out(out)?;
    let policy_path = write_file(out.join(POLICY_FILE), |w| policy::write_policy_csv(&rows, w, Some(&hash)))?;
    let mut written = vec![policy_path];
    let man = manifest("solve", cfg, &hash, Some(&p), Some(&m), &written);
    written.push(write_json(out.join(MANIFEST_FILE), &man)?);
    Ok(written)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub outcome: Result<SweepPoint, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub regime: retirement_core::Regime,
    pub z_bar: Option<f64>,
    pub w_bar: Option<f64>,
    pub j: Option<f64>,
}

/// Runs the sweep grid, first axis outermost. Points are solved in parallel
/// and returned in grid order; failures are kept per point.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let axes = &cfg.sweep;
    if axes.is_empty() {
        return Err(CliError::Config("config has no `sweep` section".into()));
    }
    if axes.len() > MAX_SWEEP_AXES {
        return Err(CliError::Config(format!("at most {MAX_SWEEP_AXES} sweep parameters, got {}", axes.len())));
    }
    if axes.len() == 2 && axes[0].param == axes[1].param {
        return Err(CliError::Config(format!("parameter `{}` swept twice", axes[0].param)));
    }
    let grids = axes.iter().map(|a| a.values()).collect::<Result<Vec<_>, _>>()?;
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for g in &grids {
        points = points.iter().flat_map(|head| g.iter().map(move |&v| [head.as_slice(), &[v]].concat())).collect();
    }
    let opts = cfg.validation();
    Ok(points
        .into_par_iter()
        .map(|values| {
            let outcome = (|| {
                let mut raw = cfg.params;
                for (axis, &v) in axes.iter().zip(&values) {
                    set_param(&mut raw, &axis.param, v)?;
                }
                let p = validate(&raw, opts)?;
                let m = SolvedModel::solve_with(&p, cfg.regime_tol)?;
                Ok(SweepPoint { regime: m.regime(), z_bar: m.z_bar(), w_bar: m.w_bar(), j: m.j() })
            })()
            .map_err(|e: CliError| e.to_string());
            SweepRow { values, outcome }
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_sweep_csv<W: Write>(cfg: &RunConfig, rows: &[SweepRow], mut w: W, hash: &str) -> io::Result<()> {
    use retirement_core::format::{fmt_opt, fmt_sig};
    writeln!(w, "# config_hash={hash}")?;
    let names: Vec<&str> = cfg.sweep.iter().map(|a| a.param.as_str()).collect();
    writeln!(w, "{},regime,z_bar,w_bar,j,error", names.join(","))?;
    for row in rows {
        let vals: Vec<String> = row.values.iter().map(|&v| fmt_sig(v)).collect();
        let tail = match &row.outcome {
            Ok(pt) => format!("{},{},{},{},", pt.regime.as_str(), fmt_opt(pt.z_bar), fmt_opt(pt.w_bar), fmt_opt(pt.j)),
            Err(e) => format!(",,,,{}", csv_field(e)),
        };
        writeln!(w, "{},{tail}", vals.join(","))?;
    }
    Ok(())
}

/// Writes `sweep.csv` and `manifest.json`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Written, CliError> {
    let hash = cfg.hash();
    let rows = sweep_rows(cfg)?;
    create_out(out)?;
    let mut written = vec![write_file(out.join(SWEEP_FILE), |w| write_sweep_csv(cfg, &rows, w, &hash))?];
    let man = manifest("sweep", cfg, &hash, None, None, &written);
    written.push(write_json(out.join(MANIFEST_FILE), &man)?);
    Ok(written)
}

/// Simulates paths and writes `paths.csv`, `summary.json` and the manifest.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Written, CliError> {
    let hash = cfg.hash();
    let sim = cfg.simulation.ok_or_else(|| CliError::Config("config has no `simulation` section".into()))?;
    sim.validate()?;
    let (p, m) = solve_model(cfg)?;
    let paths = simulate_paths(&sim, &m)?;
    let budget = budget_check(&sim, &m)?;
    let summary = summarize_paths(&paths);
    create_out(out)?;
    let mut written = vec![write_file(out.join(PATHS_FILE), |w| write_paths_csv(&paths, w, Some(&hash)))?];
    let doc = json!({
        "config_hash": hash,
        "regime": m.regime().as_str(),
        "z_bar": opt(m.z_bar()),
        "w_bar": opt(m.w_bar()),
        "simulation": sim,
        "paths": {
            "n_paths": summary.n_paths,
            "voluntarily_retired": num(summary.voluntarily_retired),
            "disaster_retired": num(summary.disaster_retired),
            "working": num(summary.working),
            "mean_tau_hit": opt(summary.mean_tau_hit),
        },
        "budget": {
            "form": budget.form,
            "estimate": num(budget.estimate),
            "std_error": num(budget.std_error),
            "target": num(budget.target),
            "tail_bound": num(budget.tail_bound),
            "pass": budget.pass,
            "z0": num(budget.z0),
            "w0": num(budget.w0),
        },
    });
    written.push(write_json(out.join(SUMMARY_FILE), &doc)?);
    let man = manifest("simulate", cfg, &hash, Some(&p), Some(&m), &written);
    written.push(write_json(out.join(MANIFEST_FILE), &man)?);
    Ok(written)
}

pub fn report_json(report: &VerifyReport, hash: &str) -> Value {
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "status": c.status,
                "measured": opt(c.measured),
                "tolerance": opt(c.tolerance),
                "detail": c.detail,
            })
        })
        .collect();
    json!({
        "config_hash": hash,
        "regime": report.regime.as_str(),
        "z_bar": opt(report.z_bar),
        "w_bar": opt(report.w_bar),
        "j": opt(report.j),
        "passed": report.passed,
        "checks": checks,
    })
}

/// Runs the verification suite and writes `verify.json` and the manifest.
/// A failing check yields [`CliError::VerificationFailed`] after the files
/// are written.
pub fn cmd_verify(cfg: &RunConfig, out: &Path, perturb_a: Option<f64>) -> Result<Written, CliError> {
    let hash = cfg.hash();
    let p = cfg.model_params()?;
    let mut opts = cfg.verify;
    if perturb_a.is_some() {
        opts.perturb_a = perturb_a;
    }
    let report = run_verification(&p, cfg.regime_tol, &opts)?;
    create_out(out)?;
    let mut written = vec![write_json(out.join(REPORT_FILE), &report_json(&report, &hash))?];
    let man = manifest("verify", cfg, &hash, Some(&p), None, &written);
    written.push(write_json(out.join(MANIFEST_FILE), &man)?);
    let failed: Vec<String> =
        report.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(written)
    } else {
        Err(CliError::VerificationFailed(failed))
    }
}
