//! Optimal voluntary retirement for a low-income worker exposed to an
//! income disaster and receiving government income support.
//!
//! The solver works entirely in the dual variable `z` (marginal utility):
//! the post-retirement dual value is closed form ([`post_dual`]), the
//! early-retirement premium and the retirement threshold come from a
//! variation-of-parameters representation ([`free_boundary`]), and primal
//! policies are recovered by differentiation ([`policy`]). [`simulator`]
//! checks the solution by Monte Carlo and [`verify`] bundles every check.

pub mod error;
pub mod format;
pub mod free_boundary;
pub mod model;
pub mod numerics;
pub mod params;
pub mod policy;
pub mod post_dual;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
pub use free_boundary::{FreeBoundarySolution, RunningReward};
pub use params::{DualRoots, ModelParams, ParamError, RawParams, RawSupport, Regime, Support, ValidationOptions};
pub use model::SolvedModel;
pub use policy::{GridSpec, Phase, PolicyPoint, PolicyRow};
pub use post_dual::PostRetirementDual;
pub use simulator::{BudgetReport, PathRecord, PathStatus, SimConfig};
pub use verify::{CheckResult, CheckStatus, VerifyOptions, VerifyReport};
