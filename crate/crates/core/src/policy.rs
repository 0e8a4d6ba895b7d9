//! Primal policies recovered from the dual: wealth, consumption, portfolio,
//! the inverse wealth map and exportable policy tables.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::SolvedModel;
use crate::numerics::{find_root, log_grid, Bracket};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    PreRetirement,
    PostRetirement,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreRetirement => "PreRetirement",
            Phase::PostRetirement => "PostRetirement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyPoint {
    pub z: f64,
    pub wealth: f64,
    pub consumption: f64,
    pub portfolio: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyRow {
    pub point: PolicyPoint,
    pub is_threshold: bool,
}

pub const POLICY_CSV_HEADER: &str = "z,wealth,consumption,portfolio,phase,is_threshold";

fn check_z(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveZ(z))
    }
}

fn check_region(phase: Phase, m: &SolvedModel, z: f64) -> Result<()> {
    check_z(z)?;
    if let (Phase::PreRetirement, Some(z_bar)) = (phase, m.z_bar()) {
        // z̄ itself is admitted as the boundary point of the working region.
        if z < z_bar {
            return Err(Error::OutOfRegion { z, z_bar });
        }
    }
    Ok(())
}

/// Optimal consumption at dual level `z`.
pub fn consumption(phase: Phase, p: &ModelParams, z: f64) -> Result<f64> {
    check_z(z)?;
    let c = z.powf(-1.0 / p.gamma());
    Ok(match phase {
        Phase::PreRetirement => c,
        Phase::PostRetirement => (c - p.support_level()).max(0.0),
    })
}

/// Financial wealth `−Ṽ′(z)` (pre) or `−Ṽ_D′(z)` (post).
pub fn wealth_of_dual(phase: Phase, m: &SolvedModel, z: f64) -> Result<f64> {
    check_region(phase, m, z)?;
    Ok(-match phase {
        Phase::PreRetirement => m.v_tilde_derivative(z, 1)?,
        Phase::PostRetirement => m.dual().derivative(z, 1)?,
    })
}

fn second_derivative(phase: Phase, m: &SolvedModel, z: f64) -> Result<f64> {
    match phase {
        Phase::PreRetirement => m.v_tilde_derivative(z, 2),
        Phase::PostRetirement => m.dual().derivative(z, 2),
    }
}

/// Dollar amount held in the risky asset, `(θ/σ)·z·Ṽ″(z)`.
pub fn portfolio(phase: Phase, m: &SolvedModel, z: f64) -> Result<f64> {
    check_region(phase, m, z)?;
    let p = m.params();
    Ok(p.theta() / p.sigma() * z * second_derivative(phase, m, z)?)
}

pub fn policy_point(phase: Phase, m: &SolvedModel, z: f64) -> Result<PolicyPoint> {
    Ok(PolicyPoint {
        z,
        wealth: wealth_of_dual(phase, m, z)?,
        consumption: consumption(phase, m.params(), z)?,
        portfolio: portfolio(phase, m, z)?,
        phase,
    })
}

/// Attainable wealth interval `(lo, hi]` of a phase; `hi` is infinite unless
/// a retirement threshold caps pre-retirement wealth.
pub fn wealth_range(phase: Phase, m: &SolvedModel) -> Result<(f64, f64)> {
    let p = m.params();
    Ok(match phase {
        Phase::PostRetirement => (-p.y2() / p.r(), f64::INFINITY),
        Phase::PreRetirement => (m.pre_retirement_wealth_floor()?, m.w_bar().unwrap_or(f64::INFINITY)),
    })
}

/// The dual level whose wealth equals `w`.
pub fn dual_of_wealth(phase: Phase, m: &SolvedModel, w: f64) -> Result<f64> {
    let (lo, hi) = wealth_range(phase, m)?;
    let out_of_range = || Error::WealthOutOfRange { wealth: w, lo, hi };
    if !w.is_finite() || w <= lo || w > hi {
        return Err(out_of_range());
    }
    let f = |z: f64| wealth_of_dual(phase, m, z).map(|x| x - w);

    let floor = match phase {
        Phase::PreRetirement => m.z_bar(),
        Phase::PostRetirement => None,
    };
    if let Some(z_bar) = floor {
        if w == hi {
            return Ok(z_bar);
        }
    }
    // Wealth decreases in z: grow the bracket geometrically from the kink.
    let anchor = floor.map_or(m.dual().kink, |z_bar| z_bar.max(m.dual().kink));
    let mut z_lo = anchor;
    let mut f_lo = f(z_lo)?;
    let mut steps = 0;
    while f_lo < 0.0 {
        z_lo = match floor {
            Some(z_bar) => (0.5 * z_lo).max(z_bar),
            None => 0.5 * z_lo,
        };
        f_lo = f(z_lo)?;
        steps += 1;
        if steps > 2000 || (floor == Some(z_lo) && f_lo < 0.0) {
            return Err(out_of_range());
        }
    }
    let mut z_hi = anchor;
    let mut f_hi = f(z_hi)?;
    steps = 0;
    while f_hi > 0.0 {
        z_hi *= 2.0;
        f_hi = f(z_hi)?;
        steps += 1;
        if steps > 2000 || !z_hi.is_finite() {
            return Err(out_of_range());
        }
    }
    if f_lo == 0.0 {
        return Ok(z_lo);
    }
    if f_hi == 0.0 {
        return Ok(z_hi);
    }
    let bracket = Bracket::from_values(z_lo, z_hi, f_lo, f_hi)?;
    let root = find_root(|z| f(z).unwrap_or(f64::NAN), bracket, 1e-14, 400)?;
    Ok(root)
}

/// Log-spaced grid description. Missing bounds are filled from the solved
/// model: the pre-retirement grid starts at z̄ when it exists.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    /// Restrict the table to one phase.
    pub phase: Option<Phase>,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        Self { n, ..Self::default() }
    }
}

fn default_z_max(m: &SolvedModel) -> f64 {
    10.0 * m.dual().kink.max(m.j().unwrap_or(0.0)).max(1.0)
}

fn default_z_min(m: &SolvedModel) -> f64 {
    1e-2 * m.z_bar().unwrap_or(m.dual().kink).min(m.dual().kink)
}

/// Policy rows over a log grid. Pre-retirement rows come first in increasing
/// `z`, starting with the flagged threshold row when a threshold exists;
/// post-retirement rows follow, and are omitted when retirement is never
/// optimal.
pub fn policy_table(m: &SolvedModel, grid: &GridSpec) -> Result<Vec<PolicyRow>> {
    let z_max = grid.z_max.unwrap_or_else(|| default_z_max(m));
    let z_min = grid.z_min.unwrap_or_else(|| default_z_min(m));
    if grid.n == 0 || !(z_min > 0.0 && z_max >= z_min && z_max.is_finite()) {
        return Err(Error::InvalidConfig(format!("invalid grid: n={}, z in [{z_min}, {z_max}]", grid.n)));
    }
    let mut rows = Vec::new();
    let want = |ph: Phase| grid.phase.is_none_or(|g| g == ph);

    if want(Phase::PreRetirement) {
        let (lo, threshold) = match m.z_bar() {
            Some(z_bar) if z_min <= z_bar => (z_bar, true),
            _ => (z_min, false),
        };
        let zs = if grid.n == 1 { vec![lo] } else { log_grid(lo, z_max.max(lo), grid.n) };
        for (i, z) in zs.into_iter().enumerate() {
            let point = policy_point(Phase::PreRetirement, m, z)?;
            rows.push(PolicyRow { point, is_threshold: threshold && i == 0 });
        }
    }
    if want(Phase::PostRetirement) && m.regime().is_feasible() {
        let zs = if grid.n == 1 { vec![z_min] } else { log_grid(z_min, z_max, grid.n) };
        for z in zs {
            rows.push(PolicyRow { point: policy_point(Phase::PostRetirement, m, z)?, is_threshold: false });
        }
    }
    Ok(rows)
}

/// Writes a policy table as CSV. A `# config_hash=` comment line precedes
/// the header when a hash is given.
pub fn write_policy_csv<W: Write>(rows: &[PolicyRow], mut out: W, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(hash) = config_hash {
        writeln!(out, "# config_hash={hash}")?;
    }
    writeln!(out, "{POLICY_CSV_HEADER}")?;
    for row in rows {
        let p = &row.point;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(p.z),
            fmt_sig(p.wealth),
            fmt_sig(p.consumption),
            fmt_sig(p.portfolio),
            p.phase.as_str(),
            row.is_threshold
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{RawParams, RawSupport};

    fn model(level: f64) -> SolvedModel {
        let p = RawParams {
            r: 0.02,
            mu: 0.06,
            sigma: 0.2,
            rho: 0.03,
            gamma: 2.0,
            delta: 0.03,
            y1: 1.0,
            y2: 0.0,
            support: RawSupport::level(level),
        }
        .validate()
        .unwrap();
        SolvedModel::solve(&p).unwrap()
    }

    #[test]
    fn consumption_examples() {
        let m = model(1.2);
        let p = m.params();
        assert_eq!(consumption(Phase::PreRetirement, p, 1.0).unwrap(), 1.0);
        assert_eq!(consumption(Phase::PostRetirement, p, 1.2f64.powi(-2)).unwrap(), 0.0);
        assert_eq!(consumption(Phase::PostRetirement, p, 3.0).unwrap(), 0.0);
        assert!((consumption(Phase::PostRetirement, p, 0.25).unwrap() - 0.8).abs() < 1e-14);
        assert!(consumption(Phase::PreRetirement, p, 0.0).is_err());
    }

    #[test]
    fn threshold_wealth_matches() {
        let m = model(1.2);
        let z_bar = m.z_bar().unwrap();
        let w_bar = m.w_bar().unwrap();
        assert_eq!(wealth_of_dual(Phase::PreRetirement, &m, z_bar).unwrap(), w_bar);
        let w_post = wealth_of_dual(Phase::PostRetirement, &m, z_bar).unwrap();
        assert_eq!(w_post, w_bar);
        let w_plus = wealth_of_dual(Phase::PreRetirement, &m, z_bar * (1.0 + 1e-9)).unwrap();
        assert!((w_plus - w_bar).abs() < 1e-6 * w_bar.abs());
        assert!(matches!(
            wealth_of_dual(Phase::PreRetirement, &m, 0.5 * z_bar),
            Err(Error::OutOfRegion { .. })
        ));
        assert_eq!(dual_of_wealth(Phase::PreRetirement, &m, w_bar).unwrap(), z_bar);
    }

    #[test]
    fn round_trip() {
        let m = model(1.2);
        let z_bar = m.z_bar().unwrap();
        for phase in [Phase::PreRetirement, Phase::PostRetirement] {
            for z in log_grid(z_bar * 1.01, 1e3, 100) {
                let w = wealth_of_dual(phase, &m, z).unwrap();
                let back = dual_of_wealth(phase, &m, w).unwrap();
                assert!((back - z).abs() <= 1e-8 * z, "{phase:?} {z} {back}");
            }
        }
    }

    #[test]
    fn wealth_out_of_range() {
        let m = model(1.2);
        assert!(matches!(dual_of_wealth(Phase::PostRetirement, &m, -1.0), Err(Error::WealthOutOfRange { .. })));
        let w_bar = m.w_bar().unwrap();
        assert!(matches!(
            dual_of_wealth(Phase::PreRetirement, &m, w_bar + 1.0),
            Err(Error::WealthOutOfRange { .. })
        ));
    }

    #[test]
    fn post_wealth_tends_to_borrowing_bound() {
        let m = model(1.2);
        let w = wealth_of_dual(Phase::PostRetirement, &m, 1e6).unwrap();
        assert!(w > 0.0 && w < 1e-6, "{w}");
    }

    #[test]
    fn monotone_wealth_and_nonnegative_portfolio() {
        let m = model(1.2);
        let z_bar = m.z_bar().unwrap();
        for phase in [Phase::PreRetirement, Phase::PostRetirement] {
            let pts: Vec<_> = log_grid(z_bar * 1.001, 1e4, 500)
                .into_iter()
                .map(|z| policy_point(phase, &m, z).unwrap())
                .collect();
            assert!(pts.windows(2).all(|p| p[1].wealth < p[0].wealth));
            assert!(pts.iter().all(|p| p.portfolio >= 0.0 && p.consumption >= 0.0));
        }
    }

    #[test]
    fn table_shapes() {
        let m = model(1.2);
        let grid = GridSpec { n: 3, phase: Some(Phase::PreRetirement), ..GridSpec::default() };
        let rows = policy_table(&m, &grid).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].is_threshold && !rows[1].is_threshold);
        assert!(rows.windows(2).all(|r| r[1].point.wealth < r[0].point.wealth));

        let kink = m.dual().kink;
        let grid = GridSpec { n: 50, z_min: Some(0.1 * kink), z_max: Some(10.0 * kink), phase: Some(Phase::PostRetirement) };
        let rows = policy_table(&m, &grid).unwrap();
        assert!(rows.iter().all(|r| (r.point.z >= kink) == (r.point.consumption == 0.0)));

        let never = model(0.5);
        let rows = policy_table(&never, &GridSpec::new(10)).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| !r.is_threshold && r.point.phase == Phase::PreRetirement));
    }

    #[test]
    fn csv_layout() {
        let m = model(1.2);
        let rows = policy_table(&m, &GridSpec::new(2)).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&rows, &mut buf, Some("abc")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert_eq!(lines[1], POLICY_CSV_HEADER);
        assert_eq!(lines.len(), 2 + 4);
        assert!(lines[2].ends_with(",PreRetirement,true"));
    }
}
