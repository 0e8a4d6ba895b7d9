//! Running reward `g`, its root `j`, the dual retirement threshold `z̄`, the
//! early-retirement premium `Ψ̃` and the retirement wealth threshold `w̄`.
//!
//! `g` is a sum of power terms on each side of the kink `L^(−γ)`:
//!
//! ```text
//! z <  L^(−γ):  (y1 − y2 − L) z
//! z >= L^(−γ):  γ/(1−γ) z^((γ−1)/γ) − L^(1−γ)/(1−γ) + (y1 − y2) z
//! ```
//!
//! so every weighted integral `∫ y^(−1−m) g(y) dy` used below has a closed
//! form as a sum of power-function antiderivatives.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{find_root, Bracket};
use crate::params::{DualRoots, ModelParams, Regime};
use crate::post_dual::PostRetirementDual;

const ROOT_RTOL: f64 = 1e-14;
const ROOT_MAX_ITER: usize = 300;
const MAX_SHRINKS: usize = 12;

/// A single term `coef · y^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PowerTerm {
    coef: f64,
    exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunningReward {
    pub gamma: f64,
    pub level: f64,
    pub y1: f64,
    pub y2: f64,
    pub kink: f64,
    pub regime: Regime,
    theta: f64,
}

impl RunningReward {
    pub fn new(p: &ModelParams, regime_tol: f64) -> Self {
        let level = p.support_level();
        Self {
            gamma: p.gamma(),
            level,
            y1: p.y1(),
            y2: p.y2(),
            kink: level.powf(-p.gamma()),
            regime: p.regime(regime_tol),
            theta: p.theta(),
        }
    }

    pub fn income_gap(&self) -> f64 {
        self.y1 - self.y2
    }

    fn interior_terms(&self) -> [PowerTerm; 1] {
        [PowerTerm { coef: self.income_gap() - self.level, exponent: 1.0 }]
    }

    fn corner_terms(&self) -> [PowerTerm; 3] {
        let g = self.gamma;
        [
            PowerTerm { coef: g / (1.0 - g), exponent: (g - 1.0) / g },
            PowerTerm { coef: -self.level.powf(1.0 - g) / (1.0 - g), exponent: 0.0 },
            PowerTerm { coef: self.income_gap(), exponent: 1.0 },
        ]
    }

    /// `g(z)` without input validation.
    pub(crate) fn eval(&self, z: f64) -> f64 {
        if z < self.kink {
            (self.income_gap() - self.level) * z
        } else {
            self.corner_terms().iter().map(|t| t.coef * z.powf(t.exponent)).sum()
        }
    }

    pub fn g(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::NonPositiveZ(z));
        }
        Ok(self.eval(z))
    }

    /// `g(e^u)·e^(−u)`, evaluated termwise so that `u` may exceed the range
    /// where `e^u` is representable.
    pub fn g_over_z_log(&self, u: f64) -> f64 {
        if u < self.kink.ln() {
            self.income_gap() - self.level
        } else {
            self.corner_terms().iter().map(|t| t.coef * ((t.exponent - 1.0) * u).exp()).sum()
        }
    }

    /// `g′(z)`.
    pub fn g_prime(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::NonPositiveZ(z));
        }
        Ok(if z < self.kink {
            self.income_gap() - self.level
        } else {
            -z.powf(-1.0 / self.gamma) + self.income_gap()
        })
    }

    /// The unique zero of `g` above the kink.
    pub fn find_j(&self) -> Result<f64> {
        if !self.regime.is_feasible() {
            return Err(Error::WrongRegime(self.regime));
        }
        let lo = self.kink;
        let mut hi = 2.0 * lo;
        // g is convex and eventually grows like (y1 − y2) z.
        let mut guard = 0;
        while self.eval(hi) <= 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::BracketingFailed("g never turns positive".into()));
            }
        }
        let bracket = Bracket::new(|z| self.eval(z), lo, hi)?;
        Ok(find_root(|z| self.eval(z), bracket, ROOT_RTOL, ROOT_MAX_ITER)?)
    }

    /// `∫_a^b y^(−1−m) g(y) dy` for `0 <= a < b <= ∞`, in closed form.
    pub fn weighted_integral(&self, m: f64, a: f64, b: f64) -> f64 {
        self.scaled_weighted_integral(m, a, b, 1.0)
    }

    /// `s^m ∫_a^b y^(−1−m) g(y) dy`, evaluated without forming `s^m` or the
    /// unscaled integral, either of which can overflow for large `|m|`.
    pub fn scaled_weighted_integral(&self, m: f64, a: f64, b: f64, s: f64) -> f64 {
        if !(b > a) {
            return if a == b { 0.0 } else { -self.scaled_weighted_integral(m, b, a, s) };
        }
        let mut total = 0.0;
        if a < self.kink {
            let hi = b.min(self.kink);
            total += self.interior_terms().iter().map(|t| power_integral(*t, m, a, hi, s)).sum::<f64>();
        }
        if b > self.kink {
            let lo = a.max(self.kink);
            total += self.corner_terms().iter().map(|t| power_integral(*t, m, lo, b, s)).sum::<f64>();
        }
        total
    }

    /// `G(z) = ∫_z^∞ y^(−1−m+) g(y) dy`.
    pub fn tail_integral(&self, roots: &DualRoots, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::NonPositiveZ(z));
        }
        Ok(self.weighted_integral(roots.m_plus, z, f64::INFINITY))
    }

    /// Solves `G(z̄) = 0` on `(0, j)`. Non-feasible regimes return a solution
    /// without a threshold.
    pub fn find_z_bar(&self, roots: &DualRoots) -> Result<FreeBoundarySolution> {
        let mut sol = FreeBoundarySolution {
            regime: self.regime,
            kink: self.kink,
            j: None,
            z_bar: None,
            w_bar: None,
            residual: None,
            scaled_residual: None,
        };
        if !self.regime.is_feasible() {
            return Ok(sol);
        }
        let j = self.find_j()?;
        let big_g = |z: f64| self.weighted_integral(roots.m_plus, z, f64::INFINITY);
        let g_at_j = big_g(j);

        // Seed below the threshold. If G is already negative at the kink the
        // threshold lies above it; otherwise the interior branch of G is a
        // single power term and can be inverted exactly for a guess.
        let g_kink = big_g(self.kink);
        let guess = if g_kink < 0.0 || self.kink >= j {
            self.kink.min(j)
        } else {
            let e = 1.0 - roots.m_plus;
            let slope = self.level - self.income_gap();
            let inner = self.kink.powf(e) + (roots.m_plus - 1.0) * g_kink / slope;
            inner.powf(1.0 / e).min(self.kink)
        };
        let mut lo = guess / 10.0;
        let mut g_lo = big_g(lo);
        let mut shrinks = 0;
        while !(g_lo < 0.0) {
            if shrinks == MAX_SHRINKS {
                return Err(Error::BracketingFailed(format!(
                    "G stayed non-negative down to z = {lo:e} (G = {g_lo:e})"
                )));
            }
            lo /= 10.0;
            g_lo = big_g(lo);
            shrinks += 1;
        }
        let bracket = Bracket::from_values(lo, j, g_lo, g_at_j)?;
        let z_bar = find_root(big_g, bracket, ROOT_RTOL, ROOT_MAX_ITER)?;
        let residual = big_g(z_bar).abs();
        sol.j = Some(j);
        sol.z_bar = Some(z_bar);
        sol.residual = Some(residual);
        sol.scaled_residual = Some(residual / g_at_j.abs());
        Ok(sol)
    }

    fn vop_constant(&self, roots: &DualRoots) -> f64 {
        2.0 / (self.theta * self.theta * roots.gap())
    }

    /// The three integrals of the variation-of-parameters formula at `z`:
    /// `∫_0^z̄ y^(−1−m−) g`, `∫_z^∞ y^(−1−m+) g` and `∫_0^z y^(−1−m−) g`.
    pub fn premium_integrals(&self, roots: &DualRoots, z_bar: f64, z: f64) -> [f64; 3] {
        [
            self.weighted_integral(roots.m_minus, 0.0, z_bar),
            self.weighted_integral(roots.m_plus, z, f64::INFINITY),
            self.weighted_integral(roots.m_minus, 0.0, z),
        ]
    }

    /// `Ψ̃`, `Ψ̃′`, `Ψ̃″` at `z`; zero in the retirement region `z <= z̄`.
    /// Pass `z_bar = 0` when retirement is never optimal.
    pub fn premium_derivatives(&self, roots: &DualRoots, z_bar: f64, z: f64) -> Result<[f64; 3]> {
        if !(z > 0.0) {
            return Err(Error::NonPositiveZ(z));
        }
        if z <= z_bar {
            return Ok([0.0; 3]);
        }
        let (mp, mm) = (roots.m_plus, roots.m_minus);
        let c = self.vop_constant(roots);
        let hp = self.scaled_weighted_integral(mp, z, f64::INFINITY, z);
        // ∫_0^z − ∫_0^z̄ taken as one integral to avoid cancellation near z̄.
        let hm = self.scaled_weighted_integral(mm, z_bar, z, z);
        Ok([
            c * (hp + hm),
            c * (mp * hp + mm * hm) / z,
            c * (mp * (mp - 1.0) * hp + mm * (mm - 1.0) * hm) / (z * z)
                - 2.0 / (self.theta * self.theta) * self.eval(z) / (z * z),
        ])
    }
}

/// `coef · s^m ∫_lo^hi y^(exponent − m − 1) dy`, allowing `lo = 0` and
/// `hi = ∞`.
fn power_integral(t: PowerTerm, m: f64, lo: f64, hi: f64, s: f64) -> f64 {
    if t.coef == 0.0 {
        return 0.0;
    }
    let e = t.exponent - m;
    if e == 0.0 {
        return t.coef * s.powf(m) * (hi.ln() - lo.ln());
    }
    // s^m y^e = y^exponent (s/y)^m
    let at = |y: f64| -> f64 {
        if y == 0.0 {
            if e > 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if y.is_infinite() {
            if e < 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if y == s {
            y.powf(t.exponent)
        } else {
            y.powf(t.exponent) * (s / y).powf(m)
        }
    };
    t.coef * (at(hi) - at(lo)) / e
}

/// `Ψ̃(z)` from the variation-of-parameters formula.
pub fn psi_tilde(rw: &RunningReward, roots: &DualRoots, z_bar: f64, z: f64) -> Result<f64> {
    Ok(rw.premium_derivatives(roots, z_bar, z)?[0])
}

/// `Ṽ(z) = Ψ̃(z) + Ṽ_D(z)`.
pub fn v_tilde(rw: &RunningReward, roots: &DualRoots, d: &PostRetirementDual, z_bar: f64, z: f64) -> Result<f64> {
    Ok(psi_tilde(rw, roots, z_bar, z)? + d.value(z)?)
}

/// `w̄ = −Ṽ′(z̄) = −Ṽ_D′(z̄)`; smooth fit removes the `Ψ̃′` term.
pub fn retirement_wealth(d: &PostRetirementDual, rw: &RunningReward, z_bar: f64) -> Result<f64> {
    if !rw.regime.is_feasible() {
        return Err(Error::WrongRegime(rw.regime));
    }
    Ok(-d.derivative(z_bar, 1)?)
}

/// Regime, root of `g`, dual threshold and retirement wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeBoundarySolution {
    pub regime: Regime,
    pub kink: f64,
    pub j: Option<f64>,
    pub z_bar: Option<f64>,
    pub w_bar: Option<f64>,
    /// `|G(z̄)|`.
    pub residual: Option<f64>,
    /// `|G(z̄)| / |G(j)|`.
    pub scaled_residual: Option<f64>,
}

impl FreeBoundarySolution {
    /// Whether the threshold sits below the consumption kink, when present.
    pub fn z_bar_below_kink(&self) -> Option<bool> {
        self.z_bar.map(|z| z < self.kink)
    }
}
