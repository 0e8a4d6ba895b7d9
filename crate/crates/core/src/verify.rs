//! End-to-end invariant suite for one parameter set.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::free_boundary::RunningReward;
use crate::model::SolvedModel;
use crate::numerics::{fd_derivative, integrate, integrate_semi_infinite, log_grid};
use crate::params::{characteristic, characteristic_scale, DualRoots, ModelParams, RawSupport, Regime};
use crate::policy::{self, Phase};
use crate::post_dual::PostRetirementDual;
use crate::simulator::{self, BudgetReport, SimConfig};

const QUAD_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &'static str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        let status = if measured <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name, status, measured: Some(measured), tolerance: Some(tolerance), detail: detail.into() }
    }

    fn flag(name: &'static str, ok: bool, detail: impl Into<String>) -> Self {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name, status, measured: None, tolerance: None, detail: detail.into() }
    }

    fn skipped(name: &'static str, regime: Regime) -> Self {
        Self {
            name,
            status: CheckStatus::Skipped,
            measured: None,
            tolerance: None,
            detail: format!("no retirement threshold in regime {}", regime.as_str()),
        }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self { name, status: CheckStatus::Fail, measured: None, tolerance: None, detail: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub regime: Regime,
    pub z_bar: Option<f64>,
    pub w_bar: Option<f64>,
    pub j: Option<f64>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub monte_carlo: bool,
    pub mc_paths: u64,
    pub master_seed: u64,
    pub post_horizon_years: f64,
    pub post_dt: f64,
    pub pre_horizon_years: f64,
    pub pre_dt: f64,
    /// Multiplies the coefficient `A` before solving; a fault-injection hook.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb_a: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            monte_carlo: true,
            mc_paths: 20_000,
            master_seed: 20_240_601,
            post_horizon_years: 400.0,
            post_dt: 0.25,
            pre_horizon_years: 5.0,
            pre_dt: 1.0 / 252.0,
            perturb_a: None,
        }
    }
}

/// Solves the model (applying any fault injection) and runs every check.
pub fn run_verification(p: &ModelParams, regime_tol: f64, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut dual = PostRetirementDual::build(p)?;
    if let Some(factor) = opts.perturb_a {
        dual = dual.with_scaled_a(factor);
    }
    let m = SolvedModel::from_dual(p, dual, regime_tol)?;
    Ok(verify_model(&m, opts))
}

pub fn verify_model(m: &SolvedModel, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = vec![
        root_properties(m),
        ode_residual(m),
        smooth_pasting_kink(m),
        guard("oracle_equivalence", || oracle_equivalence(m)),
        guard("free_boundary", || free_boundary(m)),
        guard("boundary_smooth_fit", || boundary_smooth_fit(m)),
        guard("phase_consistency", || phase_consistency(m)),
        guard("variational_inequality", || variational_inequality(m)),
        regime_consistency(m),
        guard("merton_limit", || merton_limit(m)),
        guard("drift_identity_pre", || drift_identity(m, Phase::PreRetirement)),
        guard("drift_identity_post", || drift_identity(m, Phase::PostRetirement)),
    ];
    if opts.monte_carlo {
        checks.push(guard("mc_martingale", || mc_martingale(m, opts)));
        checks.push(guard("mc_budget_post", || mc_budget_post(m, opts)));
        checks.push(guard("mc_budget_pre", || mc_budget_pre(m, opts, 1.0)));
        checks.push(guard("mc_budget_pre_half_dt", || mc_budget_pre(m, opts, 0.5)));
    }
    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    VerifyReport { regime: m.regime(), z_bar: m.z_bar(), w_bar: m.w_bar(), j: m.j(), checks, passed }
}

fn guard(name: &'static str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult::failed(name, e))
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let s = scale.max(a.abs()).max(b.abs());
    if s > 0.0 {
        (a - b).abs() / s
    } else {
        0.0
    }
}

fn root_properties(m: &SolvedModel) -> CheckResult {
    let p = m.params();
    let DualRoots { m_plus, m_minus } = *m.roots();
    let bound = 0f64.min(1.0 - 1.0 / p.gamma());
    let residual = [m_plus, m_minus]
        .iter()
        .map(|&x| characteristic(p, x).abs() / characteristic_scale(p, x))
        .fold(0.0, f64::max)
        .max((characteristic(p, 1.0) + p.r()).abs())
        .max((characteristic(p, 0.0) + p.effective_discount()).abs());
    let ordered = m_plus > 1.0 && m_minus < bound;
    let mut c = CheckResult::measured(
        "root_properties",
        residual,
        1e-12,
        format!("m+ = {m_plus}, m- = {m_minus}, bound = {bound}"),
    );
    if !ordered {
        c.status = CheckStatus::Fail;
    }
    c
}

/// Interior and corner grids that stay clear of the kink.
fn branch_grids(kink: f64, n: usize) -> [Vec<f64>; 2] {
    [log_grid(kink * 1e-4, kink * (1.0 - 1e-3), n), log_grid(kink * (1.0 + 1e-3), kink * 1e4, n)]
}

fn ode_residual(m: &SolvedModel) -> CheckResult {
    let d = m.dual();
    let pointwise = branch_grids(d.kink, 200)
        .iter()
        .flatten()
        .map(|&z| d.ode_residual_relative(z).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let matching = d.kink_mismatch();
    CheckResult::measured(
        "ode_residual",
        pointwise.max(matching),
        1e-9,
        format!("pointwise {pointwise:e} on 2x200 points, kink matching {matching:e}"),
    )
}

fn smooth_pasting_kink(m: &SolvedModel) -> CheckResult {
    let d = m.dual();
    let k = d.kink;
    let (below, above) = (k * (1.0 - 1e-12), k);
    let value = rel(d.value(below).unwrap_or(f64::NAN), d.value(above).unwrap_or(f64::NAN), 0.0);
    let slope = rel(
        d.derivative(below, 1).unwrap_or(f64::NAN),
        d.derivative(above, 1).unwrap_or(f64::NAN),
        0.0,
    );
    let measured = d.kink_mismatch().max(value).max(slope);
    CheckResult::measured("smooth_pasting_kink", measured, 1e-8, format!("kink at z = {k}"))
}

/// `s^m ∫_a^b y^(−1−m) g(y) dy` by adaptive quadrature, split at the kink;
/// `b = ∞` allowed. With `abs` the integrand is `|g|`.
fn quad_weighted(rw: &RunningReward, m: f64, a: f64, b: f64, s: f64, abs: bool) -> f64 {
    let fold = |v: f64| if abs { v.abs() } else { v };
    let f = |y: f64| {
        // Log form keeps the weight from underflowing while g(y) is still large.
        fold((m * (s.ln() - y.ln())).exp() * (rw.g(y).unwrap_or(0.0) / y))
    };
    let mut cuts = vec![a];
    if rw.kink > a && rw.kink < b {
        cuts.push(rw.kink);
    }
    cuts.push(b);
    cuts.windows(2)
        .map(|w| {
            if w[1].is_infinite() {
                // In u = ln y the weight is exp(m ln s − (m − 1)u); slowly
                // decaying tails reach far beyond the largest finite y.
                let u0 = w[0].ln();
                let tail = |v: f64| {
                    let u = u0 + v;
                    fold((m * s.ln() - (m - 1.0) * u).exp() * rw.g_over_z_log(u))
                };
                integrate_semi_infinite(tail, 0.0, QUAD_RTOL).value
            } else {
                integrate(f, w[0], w[1], QUAD_RTOL).value
            }
        })
        .sum()
}

/// Largest relative deviation between the closed-form `G` and `Ψ̃` and their
/// quadrature counterparts at `n` points above the threshold.
pub fn oracle_deviation(m: &SolvedModel, n: usize) -> Result<f64> {
    let rw = m.reward();
    let roots = m.roots();
    let z_bar = m.stopping_level();
    let theta = m.params().theta();
    let c = 2.0 / (theta * theta * roots.gap());
    let kink = rw.kink;
    let zs = match m.z_bar() {
        Some(zb) => log_grid(zb * 1.01, 100.0 * m.j().unwrap_or(kink).max(kink), n),
        None => log_grid(kink * 1e-3, kink * 1e3, n),
    };
    let mut worst = 0.0f64;
    for z in zs {
        let g_closed = rw.tail_integral(roots, z)?;
        let g_quad = quad_weighted(rw, roots.m_plus, z, f64::INFINITY, 1.0, false);
        let g_scale = quad_weighted(rw, roots.m_plus, z, f64::INFINITY, 1.0, true);
        worst = worst.max(rel(g_closed, g_quad, g_scale));

        let upper = quad_weighted(rw, roots.m_plus, z, f64::INFINITY, z, false);
        let upper_abs = quad_weighted(rw, roots.m_plus, z, f64::INFINITY, z, true);
        let lower = quad_weighted(rw, roots.m_minus, z_bar, z, z, false);
        let lower_abs = quad_weighted(rw, roots.m_minus, z_bar, z, z, true);
        let psi_quad = c * (upper + lower);
        let psi_scale = c * (upper_abs + lower_abs);
        worst = worst.max(rel(m.psi(z)?, psi_quad, psi_scale));
    }
    Ok(worst)
}

fn oracle_equivalence(m: &SolvedModel) -> Result<CheckResult> {
    let worst = oracle_deviation(m, 50)?;
    Ok(CheckResult::measured("oracle_equivalence", worst, 1e-8, "G and premium at 50 points vs adaptive quadrature"))
}

/// Number of sign changes of `G` on an `n`-point log grid below `j`.
pub fn sign_changes_below_j(m: &SolvedModel, n: usize) -> Result<Option<usize>> {
    let (Some(j), Some(z_bar)) = (m.j(), m.z_bar()) else {
        return Ok(None);
    };
    let lo = (z_bar * 1e-6).min(j * 1e-6);
    let grid = log_grid(lo, j * (1.0 - 1e-9), n);
    let mut prev: Option<bool> = None;
    let mut changes = 0;
    for z in grid {
        let v = m.reward().tail_integral(m.roots(), z)?;
        if v == 0.0 {
            continue;
        }
        let s = v > 0.0;
        if prev.is_some_and(|p| p != s) {
            changes += 1;
        }
        prev = Some(s);
    }
    Ok(Some(changes))
}

fn free_boundary(m: &SolvedModel) -> Result<CheckResult> {
    let sol = m.solution();
    let Some(scaled) = sol.scaled_residual else {
        return Ok(CheckResult::skipped("free_boundary", m.regime()));
    };
    let changes = sign_changes_below_j(m, 1000)?.unwrap_or(0);
    let mut c = CheckResult::measured(
        "free_boundary",
        scaled,
        1e-10,
        format!("scaled |G(z_bar)|; {changes} sign change(s) of G on 1000 points below j"),
    );
    if changes != 1 {
        c.status = CheckStatus::Fail;
    }
    Ok(c)
}

fn boundary_smooth_fit(m: &SolvedModel) -> Result<CheckResult> {
    let Some(z_bar) = m.z_bar() else {
        return Ok(CheckResult::skipped("boundary_smooth_fit", m.regime()));
    };
    let zp = z_bar * (1.0 + 1e-12);
    let [psi, dpsi, _] = m.psi_derivatives(zp)?;
    let value_scale = m.dual().value(z_bar)?.abs().max(1.0);
    let slope_scale = m.dual().derivative(z_bar, 1)?.abs().max(1.0);
    let measured = (psi.abs() / value_scale).max(dpsi.abs() / slope_scale);
    Ok(CheckResult::measured(
        "boundary_smooth_fit",
        measured,
        1e-6,
        format!("premium {psi:e} and slope {dpsi:e} just above z_bar"),
    ))
}

fn phase_consistency(m: &SolvedModel) -> Result<CheckResult> {
    let Some(z_bar) = m.z_bar() else {
        return Ok(CheckResult::skipped("phase_consistency", m.regime()));
    };
    let w_pre = policy::wealth_of_dual(Phase::PreRetirement, m, z_bar * (1.0 + 1e-10))?;
    let w_post = policy::wealth_of_dual(Phase::PostRetirement, m, z_bar)?;
    Ok(CheckResult::measured(
        "phase_consistency",
        rel(w_pre, w_post, 1.0),
        1e-6,
        format!("pre {w_pre}, post {w_post}"),
    ))
}

/// Sign conditions of the stopping problem: the premium is non-negative in
/// the working region and the running reward is non-positive where the
/// agent retires.
fn variational_inequality(m: &SolvedModel) -> Result<CheckResult> {
    let z_bar = m.stopping_level();
    let kink = m.reward().kink;
    let top = 100.0 * m.j().unwrap_or(kink).max(kink);
    let lo = if z_bar > 0.0 { z_bar * (1.0 + 1e-6) } else { kink * 1e-4 };
    let mut worst = 0.0f64;
    for z in log_grid(lo, top, 500) {
        let psi = m.psi(z)?;
        let scale = m.v_tilde(z)?.abs().max(m.dual().value(z)?.abs()).max(1.0);
        worst = worst.max(-psi / scale);
    }
    let mut stop_violation = 0.0f64;
    if z_bar > 0.0 {
        for z in log_grid(z_bar * 1e-4, z_bar, 200) {
            stop_violation = stop_violation.max(m.reward().g(z)?);
        }
    }
    Ok(CheckResult::measured(
        "variational_inequality",
        worst.max(stop_violation),
        1e-12,
        format!("min scaled premium above z_bar {:e}; max g below z_bar {stop_violation:e}", -worst),
    ))
}

fn regime_consistency(m: &SolvedModel) -> CheckResult {
    let feasible = m.regime().is_feasible();
    let sol = m.solution();
    let ok = match (feasible, sol.z_bar, sol.j) {
        (true, Some(z), Some(j)) => z > 0.0 && z < j,
        (false, None, None) => true,
        _ => false,
    };
    CheckResult::flag(
        "regime_consistency",
        ok,
        format!("{} with z_bar below kink: {:?}", m.regime().as_str(), sol.z_bar_below_kink()),
    )
}

fn merton_limit(m: &SolvedModel) -> Result<CheckResult> {
    let mut raw = m.params().to_raw();
    raw.support = RawSupport::level(1e-10);
    let p = raw.validate()?;
    let tiny = SolvedModel::solve_with(&p, m.regime_tol())?;
    let k = p.effective_merton_k();
    let fraction = p.theta() / (p.sigma() * p.gamma());
    let mut worst = 0.0f64;
    for z in log_grid(1e-2, 1e2, 20) {
        let pt = policy::policy_point(Phase::PostRetirement, &tiny, z)?;
        let effective = pt.wealth + p.y2() / p.r();
        worst = worst.max(rel(pt.consumption, k * effective, 0.0));
        worst = worst.max(rel(pt.portfolio / effective, fraction, 0.0));
    }
    Ok(CheckResult::measured("merton_limit", worst, 1e-6, format!("K = {k}, fraction = {fraction}")))
}

/// Largest relative violation of the budget-drift identity at 20 points,
/// with the third derivative from central differences of the analytic
/// second derivative.
pub fn drift_identity_error(m: &SolvedModel, phase: Phase) -> Result<f64> {
    let p = m.params();
    let kink = m.dual().kink;
    let z_bar = m.stopping_level();
    let lo = match phase {
        Phase::PreRetirement if z_bar > 0.0 => z_bar * 1.05,
        _ => kink * 1e-2,
    };
    let hi = (kink * 1e2).max(lo * 1e3);
    let income = match phase {
        Phase::PreRetirement => p.y1(),
        Phase::PostRetirement => p.y2(),
    };
    let second = |z: f64| match phase {
        Phase::PreRetirement => m.v_tilde_derivative(z, 2),
        Phase::PostRetirement => m.dual().derivative(z, 2),
    };
    let theta2 = p.theta() * p.theta();
    let beta = p.effective_discount();
    let mut worst = 0.0f64;
    for mut z in log_grid(lo, hi, 20) {
        if (z / kink - 1.0).abs() < 1e-2 {
            z = kink * 1.02;
        }
        let v2 = second(z)?;
        let h = 1e-4 * z;
        let v3 = fd_derivative(|x| second(x).unwrap_or(f64::NAN), z, 1, h);
        let w = policy::wealth_of_dual(phase, m, z)?;
        let c = policy::consumption(phase, p, z)?;
        let lhs = [-(beta - p.r()) * z * v2, -0.5 * theta2 * z * z * v3];
        let rhs = [theta2 * z * v2, p.r() * w, -c, income];
        let scale = lhs.iter().chain(rhs.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
        let diff = lhs.iter().sum::<f64>() - rhs.iter().sum::<f64>();
        worst = worst.max(diff.abs() / scale);
    }
    Ok(worst)
}

fn drift_identity(m: &SolvedModel, phase: Phase) -> Result<CheckResult> {
    let name = match phase {
        Phase::PreRetirement => "drift_identity_pre",
        Phase::PostRetirement => "drift_identity_post",
    };
    Ok(CheckResult::measured(name, drift_identity_error(m, phase)?, 1e-4, "20 points, finite-difference third derivative"))
}

fn post_start(m: &SolvedModel) -> f64 {
    m.dual().kink / 2f64.sqrt()
}

fn pre_start(m: &SolvedModel) -> f64 {
    match m.z_bar() {
        Some(zb) => 1.5 * zb,
        None => m.dual().kink,
    }
}

fn mc_config(opts: &VerifyOptions, horizon: f64, dt: f64, z0: f64) -> SimConfig {
    SimConfig {
        n_paths: opts.mc_paths,
        horizon_years: horizon,
        dt,
        master_seed: opts.master_seed,
        z0: Some(z0),
        w0: None,
        overlay_disaster: false,
    }
}

fn mc_martingale(m: &SolvedModel, opts: &VerifyOptions) -> Result<CheckResult> {
    let cfg = mc_config(opts, 25.0, opts.post_dt, post_start(m));
    let pts = simulator::martingale_check(&cfg, m, &[1.0, 5.0, 25.0])?;
    let worst = pts.iter().map(|p| (p.estimate - p.target).abs() / p.std_error).fold(0.0, f64::max);
    Ok(CheckResult::measured(
        "mc_martingale",
        worst,
        3.0,
        format!("largest deviation in standard errors over t = 1, 5, 25 with {} paths", opts.mc_paths),
    ))
}

fn budget_result(name: &'static str, r: &BudgetReport) -> CheckResult {
    let band = 3.0 * r.std_error + r.tail_bound;
    let mut c = CheckResult::measured(
        name,
        (r.estimate - r.target).abs(),
        band,
        format!(
            "{:?} form: estimate {} vs target {} (se {:e}, tail {:e}, dt {}, T {})",
            r.form, r.estimate, r.target, r.std_error, r.tail_bound, r.dt, r.horizon_years
        ),
    );
    c.status = if r.pass { CheckStatus::Pass } else { CheckStatus::Fail };
    c
}

fn mc_budget_post(m: &SolvedModel, opts: &VerifyOptions) -> Result<CheckResult> {
    let cfg = mc_config(opts, opts.post_horizon_years, opts.post_dt, post_start(m));
    let p = *m.params();
    let r = simulator::post_retirement_budget(&cfg, m, move |z| {
        policy::consumption(Phase::PostRetirement, &p, z).unwrap_or(0.0)
    })?;
    Ok(budget_result("mc_budget_post", &r))
}

fn mc_budget_pre(m: &SolvedModel, opts: &VerifyOptions, dt_factor: f64) -> Result<CheckResult> {
    let name = if dt_factor == 1.0 { "mc_budget_pre" } else { "mc_budget_pre_half_dt" };
    let cfg = mc_config(opts, opts.pre_horizon_years, opts.pre_dt * dt_factor, pre_start(m));
    let r = simulator::pre_retirement_budget(&cfg, m)?;
    Ok(budget_result(name, &r))
}
