//! Closed-form dual value of the post-retirement problem.
//!
//! With `β = ρ + δ` and kink `k = L^(−γ)`, the reduced dual value
//! `ṽ_D(z) = Ṽ_D(z) − (y2/r)z` is
//!
//! ```text
//! z <  k:  A z^(m+) + γ/(K_β(1−γ)) z^((γ−1)/γ) + (L/r) z
//! z >= k:  B z^(m−) + L^(1−γ) / (β(1−γ))
//! ```
//!
//! where `K_β` is the Merton constant at the discount rate `β`. The
//! coefficients `A < 0` and `B > 0` make `ṽ_D` continuously differentiable
//! at the kink.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{DualRoots, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostRetirementDual {
    pub roots: DualRoots,
    pub a_coef: f64,
    pub b_coef: f64,
    pub kink: f64,
    /// Merton constant at the effective discount rate ρ + δ.
    pub k_eff: f64,
    pub theta: f64,
    r: f64,
    y2: f64,
    level: f64,
    gamma: f64,
    beta: f64,
    /// (γ − 1)/γ
    power: f64,
    merton_coef: f64,
    plateau: f64,
    /// `A k^(m+)` and `B k^(m−)`; homogeneous terms are evaluated as
    /// `Â (z/k)^m` so that extreme roots cannot overflow.
    a_hat: f64,
    b_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `z < L^(−γ)`: positive consumption.
    Interior,
    /// `z >= L^(−γ)`: consumption pinned at zero.
    Corner,
}

fn checked(name: &'static str, x: f64) -> Result<f64> {
    if x.abs() < 1e-14 || !x.is_finite() {
        Err(Error::DegenerateDenominator(name))
    } else {
        Ok(x)
    }
}

/// Coefficient of `(z/k)^m`.
fn homogeneous_coefficient(p: &ModelParams, roots: &DualRoots, m: f64) -> Result<f64> {
    let gamma = p.gamma();
    let denom = checked("m+ - m-", roots.gap())?
        * checked("m", m)?
        * checked("m - 1", m - 1.0)?
        * checked("gamma(m - 1) + 1", gamma * (m - 1.0) + 1.0)?
        * checked("theta^2", p.theta() * p.theta())?;
    Ok(-2.0 * p.support_level().powf(1.0 - gamma) / denom)
}

impl PostRetirementDual {
    pub fn build(p: &ModelParams) -> Result<Self> {
        let roots = p.dual_roots();
        let a_hat = homogeneous_coefficient(p, &roots, roots.m_plus)?;
        let b_hat = homogeneous_coefficient(p, &roots, roots.m_minus)?;
        debug_assert!(a_hat < 0.0 && b_hat > 0.0, "A = {a_hat}, B = {b_hat}");
        let gamma = p.gamma();
        let level = p.support_level();
        let kink = level.powf(-gamma);
        let beta = p.effective_discount();
        let k_eff = p.effective_merton_k();
        Ok(Self {
            roots,
            a_coef: a_hat * kink.powf(-roots.m_plus),
            b_coef: b_hat * kink.powf(-roots.m_minus),
            kink,
            k_eff,
            theta: p.theta(),
            r: p.r(),
            y2: p.y2(),
            level,
            gamma,
            beta,
            power: (gamma - 1.0) / gamma,
            merton_coef: gamma / (k_eff * (1.0 - gamma)),
            plateau: level.powf(1.0 - gamma) / (beta * (1.0 - gamma)),
            a_hat,
            b_hat,
        })
    }

    /// Copy with `A` scaled by `factor`. Fault-injection hook for the
    /// verification suite.
    #[doc(hidden)]
    pub fn with_scaled_a(mut self, factor: f64) -> Self {
        self.a_coef *= factor;
        self.a_hat *= factor;
        self
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn branch(&self, z: f64) -> Branch {
        if z < self.kink {
            Branch::Interior
        } else {
            Branch::Corner
        }
    }

    fn check(z: f64) -> Result<()> {
        if z > 0.0 && z.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveZ(z))
        }
    }

    /// `ṽ_D` and its first three derivatives at `z` (no validation).
    pub(crate) fn reduced_derivatives(&self, z: f64) -> [f64; 4] {
        self.branch_derivatives(self.branch(z), z)
    }

    /// Value and first three derivatives of the closed form of `branch`,
    /// whichever side of the kink `z` is on.
    pub fn branch_derivatives(&self, branch: Branch, z: f64) -> [f64; 4] {
        match branch {
            Branch::Interior => {
                let m = self.roots.m_plus;
                let p = self.power;
                let h = self.a_hat * (z / self.kink).powf(m);
                let q = self.merton_coef * z.powf(p);
                [
                    h + q + self.level / self.r * z,
                    m * h / z + p * q / z + self.level / self.r,
                    m * (m - 1.0) * h / (z * z) + p * (p - 1.0) * q / (z * z),
                    m * (m - 1.0) * (m - 2.0) * h / (z * z * z) + p * (p - 1.0) * (p - 2.0) * q / (z * z * z),
                ]
            }
            Branch::Corner => {
                let m = self.roots.m_minus;
                let h = self.b_hat * (z / self.kink).powf(m);
                [
                    h + self.plateau,
                    m * h / z,
                    m * (m - 1.0) * h / (z * z),
                    m * (m - 1.0) * (m - 2.0) * h / (z * z * z),
                ]
            }
        }
    }

    /// `Ṽ_D(z)`.
    pub fn value(&self, z: f64) -> Result<f64> {
        Self::check(z)?;
        Ok(self.reduced_derivatives(z)[0] + self.y2 / self.r * z)
    }

    /// `ṽ_D(z) = Ṽ_D(z) − (y2/r)z`.
    pub fn reduced_value(&self, z: f64) -> Result<f64> {
        Self::check(z)?;
        Ok(self.reduced_derivatives(z)[0])
    }

    /// Analytic derivative of `Ṽ_D` of order 1, 2 or 3 on the active branch.
    /// At the kink the corner-branch one-sided value is returned; the value
    /// and first two derivatives are continuous there, the third is not.
    pub fn derivative(&self, z: f64, order: u8) -> Result<f64> {
        Self::check(z)?;
        let d = self.reduced_derivatives(z);
        match order {
            1 => Ok(d[1] + self.y2 / self.r),
            2 => Ok(d[2]),
            3 => Ok(d[3]),
            _ => Err(Error::UnsupportedOrder(order)),
        }
    }

    /// Inhomogeneous term of the dual ODE:
    /// `max_{c≥0} [(c + L)^(1−γ)/(1−γ) − c z]`.
    pub fn running_payoff(&self, z: f64) -> f64 {
        let g = self.gamma;
        match self.branch(z) {
            Branch::Interior => g / (1.0 - g) * z.powf(self.power) + self.level * z,
            Branch::Corner => self.level.powf(1.0 - g) / (1.0 - g),
        }
    }

    /// The four terms `(θ²/2)z²ṽ″`, `(β−r)zṽ′`, `−βṽ`, and the running payoff.
    pub fn ode_terms(&self, z: f64) -> Result<[f64; 4]> {
        Self::check(z)?;
        let d = self.reduced_derivatives(z);
        Ok([
            0.5 * self.theta * self.theta * z * z * d[2],
            (self.beta - self.r) * z * d[1],
            -self.beta * d[0],
            self.running_payoff(z),
        ])
    }

    /// Residual of the dual ODE at `z`.
    pub fn ode_residual(&self, z: f64) -> Result<f64> {
        Ok(self.ode_terms(z)?.iter().sum())
    }

    /// Residual divided by the largest absolute term.
    pub fn ode_residual_relative(&self, z: f64) -> Result<f64> {
        let t = self.ode_terms(z)?;
        let scale = t.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let res: f64 = t.iter().sum();
        Ok(if scale > 0.0 { res.abs() / scale } else { res.abs() })
    }

    /// Largest mismatch of `ṽ_D`, `ṽ_D′`, `ṽ_D″` between the two branches at
    /// the kink, relative to the largest term entering each. Each branch
    /// solves the ODE on its own, so this is what pins down `A` and `B`.
    pub fn kink_mismatch(&self) -> f64 {
        let k = self.kink;
        let lo = self.branch_derivatives(Branch::Interior, k);
        let hi = self.branch_derivatives(Branch::Corner, k);
        let (mp, mm, p) = (self.roots.m_plus, self.roots.m_minus, self.power);
        let (a, b) = (self.a_hat.abs(), self.b_hat.abs());
        let q = (self.merton_coef * k.powf(p)).abs();
        let lin = self.level / self.r;
        let scales = [
            a.max(q).max(lin * k).max(b).max(self.plateau.abs()),
            (mp * a).max(p.abs() * q).max(lin * k).max(mm.abs() * b) / k,
            (mp * (mp - 1.0) * a).max((p * (p - 1.0)).abs() * q).max(mm * (mm - 1.0) * b) / (k * k),
        ];
        (0..3)
            .map(|i| {
                let scale = scales[i].max(lo[i].abs()).max(hi[i].abs());
                if scale > 0.0 {
                    (lo[i] - hi[i]).abs() / scale
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Post-retirement consumption `max(z^(−1/γ) − L, 0)`.
    pub fn consumption(&self, z: f64) -> f64 {
        (z.powf(-1.0 / self.gamma) - self.level).max(0.0)
    }
}
