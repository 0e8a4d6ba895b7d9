//! The solved model: parameters, post-retirement dual, free boundary and the
//! pre-retirement dual value built from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::free_boundary::{retirement_wealth, FreeBoundarySolution, RunningReward};
use crate::params::{DualRoots, ModelParams, Regime, DEFAULT_REGIME_TOL};
use crate::post_dual::PostRetirementDual;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolvedModel {
    params: ModelParams,
    regime_tol: f64,
    dual: PostRetirementDual,
    reward: RunningReward,
    solution: FreeBoundarySolution,
}

impl SolvedModel {
    pub fn solve(params: &ModelParams) -> Result<Self> {
        Self::solve_with(params, DEFAULT_REGIME_TOL)
    }

    pub fn solve_with(params: &ModelParams, regime_tol: f64) -> Result<Self> {
        let dual = PostRetirementDual::build(params)?;
        Self::from_dual(params, dual, regime_tol)
    }

    /// Solves the free boundary around a given post-retirement dual. Used to
    /// inject faults into the verification suite.
    pub fn from_dual(params: &ModelParams, dual: PostRetirementDual, regime_tol: f64) -> Result<Self> {
        let reward = RunningReward::new(params, regime_tol);
        let mut solution = reward.find_z_bar(&dual.roots)?;
        if let Some(z_bar) = solution.z_bar {
            solution.w_bar = Some(retirement_wealth(&dual, &reward, z_bar)?);
        }
        Ok(Self { params: *params, regime_tol, dual, reward, solution })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn regime_tol(&self) -> f64 {
        self.regime_tol
    }
    pub fn roots(&self) -> &DualRoots {
        &self.dual.roots
    }
    pub fn dual(&self) -> &PostRetirementDual {
        &self.dual
    }
    pub fn reward(&self) -> &RunningReward {
        &self.reward
    }
    pub fn solution(&self) -> &FreeBoundarySolution {
        &self.solution
    }
    pub fn regime(&self) -> Regime {
        self.solution.regime
    }
    pub fn z_bar(&self) -> Option<f64> {
        self.solution.z_bar
    }
    pub fn w_bar(&self) -> Option<f64> {
        self.solution.w_bar
    }
    pub fn j(&self) -> Option<f64> {
        self.solution.j
    }

    /// Lower end of the working region in `z`; zero when retirement is never
    /// optimal.
    pub fn stopping_level(&self) -> f64 {
        self.solution.z_bar.unwrap_or(0.0)
    }

    /// `Ψ̃(z) = Ṽ(z) − Ṽ_D(z)`.
    pub fn psi(&self, z: f64) -> Result<f64> {
        Ok(self.psi_derivatives(z)?[0])
    }

    /// `Ψ̃`, `Ψ̃′`, `Ψ̃″`.
    pub fn psi_derivatives(&self, z: f64) -> Result<[f64; 3]> {
        self.reward.premium_derivatives(&self.dual.roots, self.stopping_level(), z)
    }

    /// Pre-retirement dual value `Ṽ(z)`.
    pub fn v_tilde(&self, z: f64) -> Result<f64> {
        Ok(self.psi(z)? + self.dual.value(z)?)
    }

    /// Derivative of `Ṽ` of order 1 or 2.
    pub fn v_tilde_derivative(&self, z: f64, order: u8) -> Result<f64> {
        let psi = self.psi_derivatives(z)?;
        match order {
            1 | 2 => Ok(psi[order as usize] + self.dual.derivative(z, order)?),
            _ => Err(Error::UnsupportedOrder(order)),
        }
    }

    /// Numerical lower end of pre-retirement wealth, `lim_{z→∞} −Ṽ′(z)`,
    /// evaluated far out in `z`.
    pub fn pre_retirement_wealth_floor(&self) -> Result<f64> {
        let far = 1e8 * self.solution.kink.max(self.solution.j.unwrap_or(1.0)).max(1.0);
        Ok(-self.v_tilde_derivative(far, 1)?)
    }
}
