//! Monte Carlo paths for the dual state, voluntary retirement, income
//! disasters, and static-budget verification.
//!
//! Every path draws its Brownian increments from `ChaCha8` seeded with the
//! master seed on stream `path_id`, and its disaster time from a second
//! generator keyed the same way, so output never depends on scheduling.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::SolvedModel;
use crate::params::ModelParams;
use crate::policy::{self, Phase};

const DISASTER_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub const PATH_CSV_HEADER: &str = "path_id,t,z,wealth,consumption,portfolio,status";

fn default_dt() -> f64 {
    1.0 / 252.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: u64,
    pub horizon_years: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<f64>,
    #[serde(default)]
    pub overlay_disaster: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.horizon_years >= self.dt && self.horizon_years.is_finite()) {
            return bad("horizon_years must be at least dt");
        }
        match (self.z0, self.w0) {
            (Some(z), None) if z > 0.0 && z.is_finite() => Ok(()),
            (Some(_), None) => bad("z0 must be positive"),
            (None, Some(w)) if w.is_finite() => Ok(()),
            (None, Some(_)) => bad("w0 must be finite"),
            _ => bad("exactly one of z0 and w0 must be given"),
        }
    }

    pub fn n_steps(&self) -> usize {
        ((self.horizon_years / self.dt).round() as usize).max(1)
    }

    fn brownian_rng(&self, path_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathStatus {
    Working,
    VoluntarilyRetired,
    DisasterRetired,
}

impl PathStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PathStatus::Working => "Working",
            PathStatus::VoluntarilyRetired => "VoluntarilyRetired",
            PathStatus::DisasterRetired => "DisasterRetired",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_id: u64,
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub wealth: Vec<f64>,
    pub consumption: Vec<f64>,
    pub portfolio: Vec<f64>,
    pub status: Vec<PathStatus>,
    pub tau_hit: Option<f64>,
    pub tau_d: Option<f64>,
}

impl PathRecord {
    pub fn final_status(&self) -> PathStatus {
        *self.status.last().expect("paths have at least one point")
    }
}

/// Starting dual level and phase. Initial wealth at or above `w̄` means the
/// agent retires at once and the post-retirement map sets `z0`.
pub fn initial_state(cfg: &SimConfig, m: &SolvedModel) -> Result<(f64, Phase)> {
    let z_bar = m.z_bar();
    match (cfg.z0, cfg.w0) {
        (Some(z0), _) => {
            let retired = z_bar.is_some_and(|zb| z0 <= zb);
            Ok((z0, if retired { Phase::PostRetirement } else { Phase::PreRetirement }))
        }
        (None, Some(w0)) => match m.w_bar() {
            Some(w_bar) if w0 >= w_bar => Ok((policy::dual_of_wealth(Phase::PostRetirement, m, w0)?, Phase::PostRetirement)),
            _ => Ok((policy::dual_of_wealth(Phase::PreRetirement, m, w0)?, Phase::PreRetirement)),
        },
        (None, None) => Err(Error::InvalidConfig("exactly one of z0 and w0 must be given".into())),
    }
}

/// Exact log-normal step of `dz = z((ρ+δ−r)dt − θ dB)`.
#[derive(Debug, Clone, Copy)]
struct DualStepper {
    drift: f64,
    vol: f64,
}

impl DualStepper {
    fn new(p: &ModelParams, dt: f64) -> Self {
        let theta = p.theta();
        Self {
            drift: (p.effective_discount() - p.r() - 0.5 * theta * theta) * dt,
            vol: theta * dt.sqrt(),
        }
    }

    fn step(&self, z: f64, normal: f64) -> f64 {
        z * (self.drift - self.vol * normal).exp()
    }
}

/// Exponential disaster time with intensity `delta` on its own stream.
pub fn draw_disaster_time(cfg: &SimConfig, delta: f64, path_id: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed ^ DISASTER_SEED_SALT);
    rng.set_stream(path_id);
    match Exp::new(delta) {
        Ok(dist) => dist.sample(&mut rng),
        Err(_) => f64::INFINITY,
    }
}

/// Merton consumption and portfolio after an income disaster, on wealth
/// plus capitalized income support.
pub fn post_disaster_policy(p: &ModelParams, w: f64) -> Result<(f64, f64)> {
    let bound = -p.capitalized_support();
    let effective = w - bound;
    if effective < 0.0 {
        return Err(Error::InsolventAtDisaster { wealth: w, bound });
    }
    Ok((p.merton_k() * effective, p.theta() / (p.sigma() * p.gamma()) * effective))
}

fn push_point(rec: &mut PathRecord, t: f64, z: f64, point: (f64, f64, f64), status: PathStatus) {
    rec.t.push(t);
    rec.z.push(z);
    rec.wealth.push(point.0);
    rec.consumption.push(point.1);
    rec.portfolio.push(point.2);
    rec.status.push(status);
}

fn dual_point(phase: Phase, m: &SolvedModel, z: f64) -> Result<(f64, f64, f64)> {
    let pt = policy::policy_point(phase, m, z)?;
    Ok((pt.wealth, pt.consumption, pt.portfolio))
}

/// One life-cycle path on the grid `t_i = i·dt`.
pub fn simulate_dual_path(cfg: &SimConfig, m: &SolvedModel, path_id: u64) -> Result<PathRecord> {
    let p = m.params();
    let n = cfg.n_steps();
    let (mut z, start_phase) = initial_state(cfg, m)?;
    let stepper = DualStepper::new(p, cfg.dt);
    let mut rng = cfg.brownian_rng(path_id);
    let tau_d = cfg.overlay_disaster.then(|| draw_disaster_time(cfg, p.delta(), path_id));

    let mut rec = PathRecord {
        path_id,
        t: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
        wealth: Vec::with_capacity(n + 1),
        consumption: Vec::with_capacity(n + 1),
        portfolio: Vec::with_capacity(n + 1),
        status: Vec::with_capacity(n + 1),
        tau_hit: None,
        tau_d,
    };
    let mut status = PathStatus::Working;
    if start_phase == Phase::PostRetirement {
        status = PathStatus::VoluntarilyRetired;
        rec.tau_hit = Some(0.0);
    }
    // Effective wealth after a disaster, `None` if insolvent at the disaster.
    let mut disaster_wealth: Option<f64> = None;
    let mut frozen_wealth = 0.0;
    let x_drift = {
        let (t, g) = (p.theta(), p.gamma());
        (p.r() + t * t / g - p.merton_k() - 0.5 * t * t / (g * g)) * cfg.dt
    };
    let x_vol = p.theta() / p.gamma() * cfg.dt.sqrt();

    for i in 0..=n {
        let t = i as f64 * cfg.dt;
        if i > 0 {
            let normal: f64 = rng.sample(StandardNormal);
            z = stepper.step(z, normal);
            if let Some(x) = disaster_wealth.as_mut() {
                *x *= (x_drift + x_vol * normal).exp();
            }
        }
        if status == PathStatus::Working {
            if m.z_bar().is_some_and(|zb| z <= zb) {
                status = PathStatus::VoluntarilyRetired;
                rec.tau_hit = Some(t);
            } else if tau_d.is_some_and(|td| td <= t) {
                status = PathStatus::DisasterRetired;
                let w = policy::wealth_of_dual(Phase::PreRetirement, m, z)?;
                let x = w + p.capitalized_support();
                frozen_wealth = w;
                disaster_wealth = (x >= 0.0).then_some(x);
            }
        }
        let point = match status {
            PathStatus::Working => dual_point(Phase::PreRetirement, m, z)?,
            PathStatus::VoluntarilyRetired => dual_point(Phase::PostRetirement, m, z)?,
            PathStatus::DisasterRetired => match disaster_wealth {
                Some(x) => {
                    let w = x - p.capitalized_support();
                    let (c, pi) = post_disaster_policy(p, w)?;
                    (w, c, pi)
                }
                // Insolvent at the disaster: the path is frozen.
                None => (frozen_wealth, 0.0, 0.0),
            },
        };
        push_point(&mut rec, t, z, point, status);
    }
    Ok(rec)
}

/// All paths, ordered by `path_id`.
pub fn simulate_paths(cfg: &SimConfig, m: &SolvedModel) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    (0..cfg.n_paths).into_par_iter().map(|id| simulate_dual_path(cfg, m, id)).collect()
}

pub fn write_paths_csv<W: Write>(paths: &[PathRecord], mut out: W, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(hash) = config_hash {
        writeln!(out, "# config_hash={hash}")?;
    }
    writeln!(out, "{PATH_CSV_HEADER}")?;
    for rec in paths {
        for i in 0..rec.t.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                rec.path_id,
                fmt_sig(rec.t[i]),
                fmt_sig(rec.z[i]),
                fmt_sig(rec.wealth[i]),
                fmt_sig(rec.consumption[i]),
                fmt_sig(rec.portfolio[i]),
                rec.status[i].as_str()
            )?;
        }
    }
    Ok(())
}

/// Mean and standard error of per-path samples, summed in index order.
fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Which form of the static budget identity a report checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetForm {
    /// `E∫₀^T H c dt` against `w0 + y2/r`, with an analytic tail bound.
    PostRetirement,
    /// `E[∫₀^{τ∧T} H c dt + H_{τ∧T}(W + y1/r)]` against `w0 + y1/r`.
    Stopped,
    /// The stopped form when retirement never happens, so `τ∧T = T`.
    TruncatedTransversality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetReport {
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub tail_bound: f64,
    pub pass: bool,
    pub form: BudgetForm,
    pub n_paths: u64,
    pub horizon_years: f64,
    pub dt: f64,
    pub z0: f64,
    pub w0: f64,
}

impl BudgetReport {
    fn finish(mut self) -> Self {
        self.pass = (self.estimate - self.target).abs() <= 3.0 * self.std_error + self.tail_bound;
        self
    }
}

/// Static-budget check in the phase the configured initial state falls in.
pub fn budget_check(cfg: &SimConfig, m: &SolvedModel) -> Result<BudgetReport> {
    let (_, phase) = initial_state(cfg, m)?;
    match phase {
        Phase::PreRetirement => pre_retirement_budget(cfg, m),
        Phase::PostRetirement => {
            let p = *m.params();
            post_retirement_budget(cfg, m, move |z| policy::consumption(Phase::PostRetirement, &p, z).unwrap_or(0.0))
        }
    }
}

/// Post-retirement budget with an arbitrary consumption rule `c(z)`.
/// The tail bound assumes `c(z) ≤ z^(−1/γ)`.
pub fn post_retirement_budget<C>(cfg: &SimConfig, m: &SolvedModel, consumption: C) -> Result<BudgetReport>
where
    C: Fn(f64) -> f64 + Sync,
{
    cfg.validate()?;
    let p = m.params();
    let z0 = match (cfg.z0, cfg.w0) {
        (Some(z0), _) => z0,
        (None, Some(w0)) => policy::dual_of_wealth(Phase::PostRetirement, m, w0)?,
        (None, None) => unreachable!("validated"),
    };
    let w0 = policy::wealth_of_dual(Phase::PostRetirement, m, z0)?;
    let beta = p.effective_discount();
    let stepper = DualStepper::new(p, cfg.dt);
    let n = cfg.n_steps();
    let dt = cfg.dt;
    // H_t = e^{−βt} z_t / z0; the per-step discount is applied incrementally.
    let decay = (-beta * dt).exp();

    let samples: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            let mut rng = cfg.brownian_rng(id);
            let mut z = z0;
            let mut disc = 1.0;
            let mut prev = consumption(z);
            let mut acc = 0.0;
            for _ in 0..n {
                z = stepper.step(z, rng.sample(StandardNormal));
                disc *= decay;
                let cur = disc * z / z0 * consumption(z);
                acc += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
            acc
        })
        .collect();
    let (estimate, std_error) = mean_and_se(&samples);
    let horizon = n as f64 * dt;
    let k_eff = p.effective_merton_k();
    Ok(BudgetReport {
        estimate,
        std_error,
        target: w0 + p.y2() / p.r(),
        tail_bound: z0.powf(-1.0 / p.gamma()) * (-k_eff * horizon).exp() / k_eff,
        pass: false,
        form: BudgetForm::PostRetirement,
        n_paths: cfg.n_paths,
        horizon_years: horizon,
        dt,
        z0,
        w0,
    }
    .finish())
}

/// Pre-retirement budget in stopped form. Stopping is monitored on the grid
/// only, which biases the estimate by a term of order `dt`.
pub fn pre_retirement_budget(cfg: &SimConfig, m: &SolvedModel) -> Result<BudgetReport> {
    cfg.validate()?;
    let p = m.params();
    let (z0, phase) = initial_state(cfg, m)?;
    let w0 = policy::wealth_of_dual(phase, m, z0)?;
    let target = w0 + p.y1() / p.r();
    let n = cfg.n_steps();
    let dt = cfg.dt;
    let form = if m.regime().is_feasible() { BudgetForm::Stopped } else { BudgetForm::TruncatedTransversality };
    let base = BudgetReport {
        estimate: target,
        std_error: 0.0,
        target,
        tail_bound: 0.0,
        pass: false,
        form,
        n_paths: cfg.n_paths,
        horizon_years: n as f64 * dt,
        dt,
        z0,
        w0,
    };
    if phase == Phase::PostRetirement {
        // Stopped at t = 0: the identity is the definition of the target.
        return Ok(base.finish());
    }
    let beta = p.effective_discount();
    let stepper = DualStepper::new(p, dt);
    let decay = (-beta * dt).exp();
    let z_bar = m.z_bar();
    let inv_gamma = -1.0 / p.gamma();

    let samples: Vec<Result<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            let mut rng = cfg.brownian_rng(id);
            let mut z = z0;
            let mut disc = 1.0;
            let mut prev = z0.powf(inv_gamma);
            let mut acc = 0.0;
            for _ in 0..n {
                z = stepper.step(z, rng.sample(StandardNormal));
                disc *= decay;
                let h = disc * z / z0;
                if z_bar.is_some_and(|zb| z <= zb) {
                    // Stopped: terminal wealth from the retirement map.
                    acc += 0.5 * prev * dt;
                    let w = policy::wealth_of_dual(Phase::PostRetirement, m, z)?;
                    return Ok(acc + h * (w + p.y1() / p.r()));
                }
                let cur = h * z.powf(inv_gamma);
                acc += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
            let h = disc * z / z0;
            let w = policy::wealth_of_dual(Phase::PreRetirement, m, z)?;
            Ok(acc + h * (w + p.y1() / p.r()))
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    let (estimate, std_error) = mean_and_se(&samples);
    Ok(BudgetReport { estimate, std_error, ..base }.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub pass: bool,
}

/// `E[e^{−(ρ+δ−r)t} z_t] = z0` at the requested times (rounded to the grid).
pub fn martingale_check(cfg: &SimConfig, m: &SolvedModel, times: &[f64]) -> Result<Vec<MartingalePoint>> {
    cfg.validate()?;
    let p = m.params();
    let (z0, _) = initial_state(cfg, m)?;
    let stepper = DualStepper::new(p, cfg.dt);
    let steps: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    let last = steps.iter().copied().max().unwrap_or(0);
    let rate = p.effective_discount() - p.r();

    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            let mut rng = cfg.brownian_rng(id);
            let mut z = z0;
            let mut out = vec![0.0; steps.len()];
            for i in 0..=last {
                if i > 0 {
                    z = stepper.step(z, rng.sample(StandardNormal));
                }
                for (k, &s) in steps.iter().enumerate() {
                    if s == i {
                        out[k] = (-rate * i as f64 * cfg.dt).exp() * z;
                    }
                }
            }
            out
        })
        .collect();
    Ok(steps
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let column: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
            let (estimate, std_error) = mean_and_se(&column);
            MartingalePoint {
                t: s as f64 * cfg.dt,
                estimate,
                std_error,
                target: z0,
                pass: (estimate - z0).abs() <= 3.0 * std_error,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSummary {
    pub n_paths: u64,
    pub voluntarily_retired: f64,
    pub disaster_retired: f64,
    pub working: f64,
    pub mean_tau_hit: Option<f64>,
}

/// Fractions of paths by final status.
pub fn summarize_paths(paths: &[PathRecord]) -> PathSummary {
    let n = paths.len().max(1) as f64;
    let count = |s: PathStatus| paths.iter().filter(|r| r.final_status() == s).count() as f64 / n;
    let hits: Vec<f64> = paths.iter().filter_map(|r| r.tau_hit).collect();
    PathSummary {
        n_paths: paths.len() as u64,
        voluntarily_retired: count(PathStatus::VoluntarilyRetired),
        disaster_retired: count(PathStatus::DisasterRetired),
        working: count(PathStatus::Working),
        mean_tau_hit: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
    }
}

/// Fraction of paths that reach `z̄` on the grid by the horizon, tracking
/// only the dual state.
pub fn retired_fraction(cfg: &SimConfig, m: &SolvedModel) -> Result<f64> {
    cfg.validate()?;
    let (z0, phase) = initial_state(cfg, m)?;
    let Some(z_bar) = m.z_bar() else {
        return Ok(0.0);
    };
    if phase == Phase::PostRetirement {
        return Ok(1.0);
    }
    let stepper = DualStepper::new(m.params(), cfg.dt);
    let n = cfg.n_steps();
    let hits: Vec<bool> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            let mut rng = cfg.brownian_rng(id);
            let mut z = z0;
            (0..n).any(|_| {
                z = stepper.step(z, rng.sample(StandardNormal));
                z <= z_bar
            })
        })
        .collect();
    Ok(hits.iter().filter(|&&h| h).count() as f64 / cfg.n_paths as f64)
}
