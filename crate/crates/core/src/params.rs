//! Model parameters, their validation, and the scalar constants shared by
//! every other module: market price of risk, Merton constant, the roots of
//! the characteristic quadratic and the income-support level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance (income units) used to detect the knife edge
/// `L = y1 − y2`.
pub const DEFAULT_REGIME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("`{field}` must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("rate `{field}` must be positive, got {value}")]
    NonPositiveRate { field: &'static str, value: f64 },
    #[error("`{field}` must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("`mu` ({mu}) must exceed `r` ({r})")]
    MuNotAboveR { mu: f64, r: f64 },
    #[error("`gamma` = 1 (log utility) is not supported")]
    GammaIsOne,
    #[error("income order violated: need y1 > y2 >= 0, got y1 = {y1}, y2 = {y2}")]
    IncomeOrder { y1: f64, y2: f64 },
    #[error("Merton constant K = {0} is not positive")]
    NonPositiveMertonK(f64),
    #[error("`support` must give exactly one of `I` or `L`")]
    BothOrNeitherSupportGiven,
    #[error("subsidy principal `I` must lie in (0, y1 = {y1}), got {value}")]
    SubsidyOutOfRange { value: f64, y1: f64 },
}

impl ParamError {
    /// Name of the offending config field, when there is a single one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ParamError::NonFinite { field, .. }
            | ParamError::NonPositiveRate { field, .. }
            | ParamError::NonPositive { field, .. } => Some(field),
            ParamError::MuNotAboveR { .. } => Some("mu"),
            ParamError::GammaIsOne => Some("gamma"),
            ParamError::IncomeOrder { .. } => Some("y2"),
            ParamError::BothOrNeitherSupportGiven | ParamError::SubsidyOutOfRange { .. } => Some("support"),
            ParamError::NonPositiveMertonK(_) => None,
        }
    }
}

/// Income support as given in a config: `{"I": x}` or `{"L": x}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RawSupport {
    #[serde(rename = "I", default, skip_serializing_if = "Option::is_none")]
    pub subsidy: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl RawSupport {
    pub fn level(level: f64) -> Self {
        Self { subsidy: None, level: Some(level) }
    }

    pub fn subsidy(subsidy: f64) -> Self {
        Self { subsidy: Some(subsidy), level: None }
    }
}

/// Unvalidated parameter record, field names as in the JSON config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
    pub delta: f64,
    pub y1: f64,
    pub y2: f64,
    pub support: RawSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Subsidy principal `I`; paid as the flow `(r + δ)·I`.
    #[serde(rename = "I")]
    Subsidy(f64),
    /// Living-standard level `L` entering post-retirement utility `(c + L)`.
    #[serde(rename = "L")]
    Level(f64),
}

/// Validated parameters with cached derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    r: f64,
    mu: f64,
    sigma: f64,
    rho: f64,
    gamma: f64,
    delta: f64,
    y1: f64,
    y2: f64,
    support: Support,
    theta: f64,
    merton_k: f64,
    level: f64,
    delta_tied_to_k: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Replace δ by the Merton constant K after computing K.
    pub tie_delta_to_k: bool,
}

impl RawParams {
    pub fn validate(&self) -> Result<ModelParams, ParamError> {
        self.validate_with(ValidationOptions::default())
    }

    pub fn validate_with(&self, opts: ValidationOptions) -> Result<ModelParams, ParamError> {
        let checks: [(&'static str, f64); 8] = [
            ("r", self.r),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("y1", self.y1),
            ("y2", self.y2),
        ];
        for (field, value) in checks {
            if !value.is_finite() {
                return Err(ParamError::NonFinite { field, value });
            }
        }
        for (field, value) in [("r", self.r), ("rho", self.rho)] {
            if value <= 0.0 {
                return Err(ParamError::NonPositiveRate { field, value });
            }
        }
        if !opts.tie_delta_to_k && self.delta <= 0.0 {
            return Err(ParamError::NonPositiveRate { field: "delta", value: self.delta });
        }
        if self.sigma <= 0.0 {
            return Err(ParamError::NonPositive { field: "sigma", value: self.sigma });
        }
        if self.mu <= self.r {
            return Err(ParamError::MuNotAboveR { mu: self.mu, r: self.r });
        }
        if self.gamma <= 0.0 {
            return Err(ParamError::NonPositive { field: "gamma", value: self.gamma });
        }
        if (self.gamma - 1.0).abs() < 1e-12 {
            return Err(ParamError::GammaIsOne);
        }
        if self.y1 <= 0.0 {
            return Err(ParamError::NonPositive { field: "y1", value: self.y1 });
        }
        if self.y2 < 0.0 || self.y2 >= self.y1 {
            return Err(ParamError::IncomeOrder { y1: self.y1, y2: self.y2 });
        }
        let support = match (self.support.subsidy, self.support.level) {
            (Some(i), None) => Support::Subsidy(i),
            (None, Some(l)) => Support::Level(l),
            _ => return Err(ParamError::BothOrNeitherSupportGiven),
        };

        let theta = (self.mu - self.r) / self.sigma;
        let merton_k = merton_constant_raw(self.r, self.rho, self.gamma, theta);
        if !(merton_k > 0.0) {
            return Err(ParamError::NonPositiveMertonK(merton_k));
        }
        let delta = if opts.tie_delta_to_k { merton_k } else { self.delta };

        let level = match support {
            Support::Level(l) => {
                if !l.is_finite() {
                    return Err(ParamError::NonFinite { field: "support", value: l });
                }
                if l <= 0.0 {
                    return Err(ParamError::NonPositive { field: "support", value: l });
                }
                l
            }
            Support::Subsidy(i) => {
                if !i.is_finite() {
                    return Err(ParamError::NonFinite { field: "support", value: i });
                }
                if i <= 0.0 || i >= self.y1 {
                    return Err(ParamError::SubsidyOutOfRange { value: i, y1: self.y1 });
                }
                support_level_from_subsidy(merton_k, self.r, delta, i)
            }
        };

        Ok(ModelParams {
            r: self.r,
            mu: self.mu,
            sigma: self.sigma,
            rho: self.rho,
            gamma: self.gamma,
            delta,
            y1: self.y1,
            y2: self.y2,
            support,
            theta,
            merton_k,
            level,
            delta_tied_to_k: opts.tie_delta_to_k,
        })
    }
}

/// `K = r + (ρ − r)/γ + (γ − 1)θ²/(2γ²)`.
pub fn merton_constant_raw(r: f64, rho: f64, gamma: f64, theta: f64) -> f64 {
    r + (rho - r) / gamma + (gamma - 1.0) / (2.0 * gamma * gamma) * theta * theta
}

/// `L = K·((r + δ)/r)·I`.
pub fn support_level_from_subsidy(merton_k: f64, r: f64, delta: f64, subsidy: f64) -> f64 {
    merton_k * (r + delta) / r * subsidy
}

impl ModelParams {
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }
    pub fn support(&self) -> Support {
        self.support
    }
    /// Market price of risk `(μ − r)/σ`.
    pub fn theta(&self) -> f64 {
        self.theta
    }
    /// Merton constant at the subjective rate ρ.
    pub fn merton_k(&self) -> f64 {
        self.merton_k
    }
    /// Resolved income-support level `L`.
    pub fn support_level(&self) -> f64 {
        self.level
    }
    /// Effective discount rate `ρ + δ` once disaster risk is integrated out.
    pub fn effective_discount(&self) -> f64 {
        self.rho + self.delta
    }
    /// Merton constant at the effective discount rate `ρ + δ`. This is the
    /// consumption-to-wealth ratio of the reduced post-retirement problem.
    pub fn effective_merton_k(&self) -> f64 {
        merton_constant_raw(self.r, self.effective_discount(), self.gamma, self.theta)
    }
    /// Income gap `y1 − y2`.
    pub fn income_gap(&self) -> f64 {
        self.y1 - self.y2
    }
    pub fn delta_tied_to_k(&self) -> bool {
        self.delta_tied_to_k
    }
    /// True when δ coincides with K (the simplifying case).
    pub fn delta_equals_k(&self) -> bool {
        (self.delta - self.merton_k).abs() <= 1e-12 * self.merton_k.max(1.0)
    }

    /// Subsidy principal `I` implied by the support level.
    pub fn subsidy(&self) -> f64 {
        match self.support {
            Support::Subsidy(i) => i,
            Support::Level(l) => l * self.r / (self.merton_k * (self.r + self.delta)),
        }
    }

    /// Capitalized value `(r + δ)·I / r` of the post-disaster support flow.
    pub fn capitalized_support(&self) -> f64 {
        (self.r + self.delta) * self.subsidy() / self.r
    }

    pub fn regime(&self, tol: f64) -> Regime {
        Regime::classify(self.level, self.y1, self.y2, tol)
    }

    pub fn dual_roots(&self) -> DualRoots {
        DualRoots::new(self)
    }

    /// Back to a raw record, with `L` or `I` as originally supplied.
    pub fn to_raw(&self) -> RawParams {
        RawParams {
            r: self.r,
            mu: self.mu,
            sigma: self.sigma,
            rho: self.rho,
            gamma: self.gamma,
            delta: self.delta,
            y1: self.y1,
            y2: self.y2,
            support: match self.support {
                Support::Subsidy(i) => RawSupport::subsidy(i),
                Support::Level(l) => RawSupport::level(l),
            },
        }
    }
}

/// Where the support level sits relative to the income gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `L < y1 − y2`: never retire voluntarily.
    DelayForever,
    /// `L = y1 − y2` within tolerance: still never retire.
    KnifeEdge,
    /// `L > y1 − y2`: retire when wealth first reaches the threshold.
    RetirementFeasible,
}

impl Regime {
    pub fn classify(level: f64, y1: f64, y2: f64, tol: f64) -> Self {
        let diff = level - (y1 - y2);
        if diff > tol {
            Regime::RetirementFeasible
        } else if diff < -tol {
            Regime::DelayForever
        } else {
            Regime::KnifeEdge
        }
    }

    pub fn is_feasible(self) -> bool {
        self == Regime::RetirementFeasible
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::DelayForever => "DelayForever",
            Regime::KnifeEdge => "KnifeEdge",
            Regime::RetirementFeasible => "RetirementFeasible",
        }
    }
}

/// Roots of `(θ²/2)m² + (ρ + δ − r − θ²/2)m − (ρ + δ) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualRoots {
    pub m_plus: f64,
    pub m_minus: f64,
}

impl DualRoots {
    pub fn new(p: &ModelParams) -> Self {
        let (a, b, c) = quadratic_coefficients(p);
        // Cancellation-free form: q = −(b + sgn(b)·√disc)/2, roots q/a and c/q.
        let disc = b * b - 4.0 * a * c;
        let q = -0.5 * (b + disc.sqrt().copysign(b));
        let (x1, x2) = (q / a, c / q);
        Self { m_plus: x1.max(x2), m_minus: x1.min(x2) }
    }

    pub fn gap(&self) -> f64 {
        self.m_plus - self.m_minus
    }
}

fn quadratic_coefficients(p: &ModelParams) -> (f64, f64, f64) {
    let half_theta_sq = 0.5 * p.theta * p.theta;
    let beta = p.effective_discount();
    (half_theta_sq, beta - p.r - half_theta_sq, -beta)
}

/// Value of the characteristic quadratic at `m`.
pub fn characteristic(p: &ModelParams, m: f64) -> f64 {
    let (a, b, c) = quadratic_coefficients(p);
    (a * m + b) * m + c
}

/// Magnitude scale of the quadratic's terms at `m`, for relative residuals.
pub fn characteristic_scale(p: &ModelParams, m: f64) -> f64 {
    let (a, b, c) = quadratic_coefficients(p);
    (a * m * m).abs() + (b * m).abs() + c.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn p0(level: f64) -> RawParams {
        RawParams {
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
    }

    #[test]
    fn p0_constants() {
        let p = p0(1.2).validate().unwrap();
        assert!((p.theta() - 0.2).abs() < 1e-15);
        assert!((p.merton_k() - 0.03).abs() < 1e-15);
        assert!((p.effective_merton_k() - 0.045).abs() < 1e-15);
        assert_eq!(p.support_level(), 1.2);
    }

    #[test]
    fn p0_roots() {
        let p = p0(1.2).validate().unwrap();
        let roots = p.dual_roots();
        let s13 = 13f64.sqrt();
        assert!((roots.m_plus - (-1.0 + s13) / 2.0).abs() < 1e-14);
        assert!((roots.m_minus - (-1.0 - s13) / 2.0).abs() < 1e-14);
        assert!((characteristic(&p, 1.0) + p.r()).abs() < 1e-15);
        assert!((characteristic(&p, 0.0) + 0.06).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut raw = p0(1.2);
        raw.mu = raw.r;
        assert_eq!(raw.validate().unwrap_err(), ParamError::MuNotAboveR { mu: 0.02, r: 0.02 });

        let mut raw = p0(1.2);
        raw.gamma = 1.0;
        assert_eq!(raw.validate().unwrap_err(), ParamError::GammaIsOne);

        let mut raw = p0(1.2);
        raw.r = 0.0;
        assert!(matches!(raw.validate().unwrap_err(), ParamError::NonPositiveRate { field: "r", .. }));

        let mut raw = p0(1.2);
        raw.y2 = 1.0;
        assert!(matches!(raw.validate().unwrap_err(), ParamError::IncomeOrder { .. }));

        let mut raw = p0(1.2);
        raw.support = RawSupport { subsidy: Some(0.5), level: Some(1.0) };
        assert_eq!(raw.validate().unwrap_err(), ParamError::BothOrNeitherSupportGiven);
        raw.support = RawSupport::default();
        assert_eq!(raw.validate().unwrap_err(), ParamError::BothOrNeitherSupportGiven);

        let mut raw = p0(1.2);
        raw.sigma = -0.1;
        assert_eq!(raw.validate().unwrap_err().field(), Some("sigma"));
    }

    #[test]
    fn negative_merton_constant_rejected() {
        // Low risk aversion with a large Sharpe ratio and a low discount rate.
        let mut raw = p0(1.2);
        raw.gamma = 0.2;
        raw.rho = 0.001;
        raw.mu = 0.5;
        let err = raw.validate().unwrap_err();
        assert!(matches!(err, ParamError::NonPositiveMertonK(k) if k < 0.0), "{err:?}");
    }

    #[test]
    fn support_level_from_subsidy_values() {
        assert!((support_level_from_subsidy(0.03, 0.02, 0.03, 0.5) - 0.0375).abs() < 1e-15);
        assert_eq!(support_level_from_subsidy(0.03, 0.02, 0.03, 0.0), 0.0);

        let mut raw = p0(1.0);
        raw.support = RawSupport::subsidy(0.5);
        let p = raw.validate().unwrap();
        assert!((p.support_level() - 0.0375).abs() < 1e-15);
        assert!((p.capitalized_support() - 1.25).abs() < 1e-14);

        raw.support = RawSupport::subsidy(0.0);
        assert!(matches!(raw.validate().unwrap_err(), ParamError::SubsidyOutOfRange { .. }));
    }

    #[test]
    fn tie_delta_to_k() {
        let p = p0(1.2).validate_with(ValidationOptions { tie_delta_to_k: true }).unwrap();
        assert!((p.delta() - 0.03).abs() < 1e-15);
        assert!(p.delta_equals_k());
        let mut raw = p0(1.2);
        raw.delta = 0.05;
        let p = raw.validate().unwrap();
        assert!(!p.delta_equals_k());
        let p = raw.validate_with(ValidationOptions { tie_delta_to_k: true }).unwrap();
        assert!(p.delta_equals_k());
    }

    #[test]
    fn regime_examples() {
        let tol = DEFAULT_REGIME_TOL;
        assert_eq!(Regime::classify(0.5, 1.0, 0.0, tol), Regime::DelayForever);
        assert_eq!(Regime::classify(1.0, 1.0, 0.0, tol), Regime::KnifeEdge);
        assert_eq!(Regime::classify(1.2, 1.0, 0.0, tol), Regime::RetirementFeasible);
        assert_eq!(Regime::classify(1.0 + 0.5e-10, 1.0, 0.0, tol), Regime::KnifeEdge);
    }

    #[test]
    fn merton_limits() {
        // rho = r, gamma -> 1: both correction terms vanish.
        let k = merton_constant_raw(0.02, 0.02, 1.0 + 1e-9, 0.2);
        assert!((k - 0.02).abs() < 1e-9);
        // gamma -> infinity
        let k = merton_constant_raw(0.02, 0.05, 1e9, 0.2);
        assert!((k - 0.02).abs() < 1e-9);
    }

    #[test]
    fn support_json_shapes() {
        let raw: RawParams = serde_json::from_str(
            r#"{"r":0.02,"mu":0.06,"sigma":0.2,"rho":0.03,"gamma":2,"delta":0.03,"y1":1,"y2":0,"support":{"I":0.5}}"#,
        )
        .unwrap();
        assert_eq!(raw.support, RawSupport::subsidy(0.5));
        let err = serde_json::from_str::<RawParams>(
            r#"{"r":0.02,"mu":0.06,"rho":0.03,"gamma":2,"delta":0.03,"y1":1,"y2":0,"support":{"L":1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sigma"));
    }
}
