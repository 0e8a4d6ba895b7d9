//! Run configuration as read from JSON, plus the overrides the command line
//! can apply on top of it.

use std::path::Path;

use retirement_core::params::{ValidationOptions, DEFAULT_REGIME_TOL};
use retirement_core::{GridSpec, ModelParams, RawParams, RawSupport, SimConfig, VerifyOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const MAX_SWEEP_AXES: usize = 2;

fn default_regime_tol() -> f64 {
    DEFAULT_REGIME_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: RawParams,
    #[serde(default = "default_regime_tol")]
    pub regime_tol: f64,
    #[serde(default)]
    pub tie_delta_to_k: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub verify: VerifyOptions,
}

/// One swept parameter: `start, start + step, …` up to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Command-line overrides, applied before hashing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tie_delta_to_k: bool,
    pub grid: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if !(cfg.regime_tol >= 0.0 && cfg.regime_tol.is_finite()) {
            return Err(CliError::Config(format!("`regime_tol` must be non-negative, got {}", cfg.regime_tol)));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            if let Some(sim) = self.simulation.as_mut() {
                sim.master_seed = seed;
            }
            self.verify.master_seed = seed;
        }
        if o.tie_delta_to_k {
            self.tie_delta_to_k = true;
        }
        if let Some(n) = o.grid {
            self.grid = Some(GridSpec { n, ..self.grid.unwrap_or_default() });
        }
    }

    pub fn validation(&self) -> ValidationOptions {
        ValidationOptions { tie_delta_to_k: self.tie_delta_to_k }
    }

    pub fn model_params(&self) -> Result<ModelParams, CliError> {
        validate(&self.params, self.validation())
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::new(DEFAULT_GRID_POINTS))
    }

    /// SHA-256 of the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn validate(raw: &RawParams, opts: ValidationOptions) -> Result<ModelParams, CliError> {
    raw.validate_with(opts).map_err(|e| CliError::Config(format!("invalid parameters: {e}")))
}

/// Parameter names a sweep may vary.
pub const SWEEP_PARAMS: [&str; 10] = ["r", "mu", "sigma", "rho", "gamma", "delta", "y1", "y2", "L", "I"];

pub fn set_param(raw: &mut RawParams, name: &str, value: f64) -> Result<(), CliError> {
    match name {
        "r" => raw.r = value,
        "mu" => raw.mu = value,
        "sigma" => raw.sigma = value,
        "rho" => raw.rho = value,
        "gamma" => raw.gamma = value,
        "delta" => raw.delta = value,
        "y1" => raw.y1 = value,
        "y2" => raw.y2 = value,
        "L" => raw.support = RawSupport::level(value),
        "I" => raw.support = RawSupport::subsidy(value),
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter `{other}`; expected one of {}",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    Ok(())
}

impl SweepAxis {
    /// Grid values. The count is fixed up front so rounding in `step`
    /// cannot add or drop the endpoint.
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let bad = |msg: String| Err(CliError::Config(format!("sweep over `{}`: {msg}", self.param)));
        if !SWEEP_PARAMS.contains(&self.param.as_str()) {
            return bad("unknown parameter".into());
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return bad("bounds and step must be finite".into());
        }
        if self.step <= 0.0 {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.stop < self.start {
            return bad(format!("empty range: stop {} is below start {}", self.stop, self.start));
        }
        let n = ((self.stop - self.start) / self.step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| retirement_core::format::round_sig(self.start + i as f64 * self.step)).collect())
    }
}
