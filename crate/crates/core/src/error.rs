use thiserror::Error;

use crate::numerics::RootError;
use crate::params::{ParamError, Regime};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("dual level must be positive, got {0}")]
    NonPositiveZ(f64),
    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(&'static str),
    #[error("operation requires a retirement-feasible regime, got {0:?}")]
    WrongRegime(Regime),
    #[error("could not bracket the dual threshold: {0}")]
    BracketingFailed(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("dual level {z} lies in the retirement region (z̄ = {z_bar})")]
    OutOfRegion { z: f64, z_bar: f64 },
    #[error("wealth {wealth} outside the attainable range ({lo}, {hi})")]
    WealthOutOfRange { wealth: f64, lo: f64, hi: f64 },
    #[error("wealth {wealth} at disaster is below the support-capitalized bound {bound}")]
    InsolventAtDisaster { wealth: f64, bound: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(u8),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Param(_) | Error::InvalidConfig(_))
    }
}
