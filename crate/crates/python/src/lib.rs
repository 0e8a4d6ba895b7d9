//! Python bindings: a solved `Model` with its thresholds, policy maps,
//! verification suite and Monte Carlo checks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use retirement_core::params::{ValidationOptions, DEFAULT_REGIME_TOL};
use retirement_core::simulator::{budget_check, simulate_paths};
use retirement_core::verify::verify_model;
use retirement_core::{policy, GridSpec, Phase, RawParams, RawSupport, SimConfig, SolvedModel, VerifyOptions};

fn to_py(e: retirement_core::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

pub fn parse_phase(phase: &str) -> PyResult<Phase> {
    match phase {
        "pre" | "PreRetirement" => Ok(Phase::PreRetirement),
        "post" | "PostRetirement" => Ok(Phase::PostRetirement),
        other => Err(PyValueError::new_err(format!("phase must be 'pre' or 'post', got {other:?}"))),
    }
}

pub fn support(level: Option<f64>, subsidy: Option<f64>) -> RawSupport {
    RawSupport { level, subsidy }
}

type PolicyTuple = (f64, f64, f64, f64, &'static str, bool);
type CheckTuple = (String, String, Option<f64>, Option<f64>);

/// Solved model for one parameter set.
#[pyclass(name = "Model", frozen, module = "retirement")]
pub struct PyModel {
    inner: SolvedModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (*, r, mu, sigma, rho, gamma, delta, y1, y2, L=None, I=None, regime_tol=DEFAULT_REGIME_TOL, tie_delta_to_k=false))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn new(
        r: f64,
        mu: f64,
        sigma: f64,
        rho: f64,
        gamma: f64,
        delta: f64,
        y1: f64,
        y2: f64,
        L: Option<f64>,
        I: Option<f64>,
        regime_tol: f64,
        tie_delta_to_k: bool,
    ) -> PyResult<Self> {
        let raw = RawParams { r, mu, sigma, rho, gamma, delta, y1, y2, support: support(L, I) };
        let p = raw
            .validate_with(ValidationOptions { tie_delta_to_k })
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = SolvedModel::solve_with(&p, regime_tol).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds a model from a JSON parameter object.
    #[staticmethod]
    #[pyo3(signature = (text, regime_tol=DEFAULT_REGIME_TOL))]
    fn from_json(text: &str, regime_tol: f64) -> PyResult<Self> {
        let raw: RawParams = serde_json_from_str(text)?;
        let p = raw.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = SolvedModel::solve_with(&p, regime_tol).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn regime(&self) -> &'static str {
        self.inner.regime().as_str()
    }

    #[getter]
    fn z_bar(&self) -> Option<f64> {
        self.inner.z_bar()
    }

    #[getter]
    fn w_bar(&self) -> Option<f64> {
        self.inner.w_bar()
    }

    #[getter]
    fn j(&self) -> Option<f64> {
        self.inner.j()
    }

    #[getter]
    fn kink(&self) -> f64 {
        self.inner.dual().kink
    }

    #[getter]
    fn roots(&self) -> (f64, f64) {
        let r = self.inner.roots();
        (r.m_plus, r.m_minus)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.params().theta()
    }

    #[getter]
    fn merton_k(&self) -> f64 {
        self.inner.params().merton_k()
    }

    #[getter]
    fn support_level(&self) -> f64 {
        self.inner.params().support_level()
    }

    /// Post-retirement dual value `ṽ_D(z)`.
    fn dual_value(&self, z: f64) -> PyResult<f64> {
        self.inner.dual().value(z).map_err(to_py)
    }

    /// Pre-retirement dual value `ṽ(z)`.
    fn v_tilde(&self, z: f64) -> PyResult<f64> {
        self.inner.v_tilde(z).map_err(to_py)
    }

    /// Early-retirement premium `ṽ − ṽ_D`.
    fn psi(&self, z: f64) -> PyResult<f64> {
        self.inner.psi(z).map_err(to_py)
    }

    #[pyo3(signature = (z, phase="pre"))]
    fn wealth(&self, z: f64, phase: &str) -> PyResult<f64> {
        policy::wealth_of_dual(parse_phase(phase)?, &self.inner, z).map_err(to_py)
    }

    #[pyo3(signature = (z, phase="pre"))]
    fn consumption(&self, z: f64, phase: &str) -> PyResult<f64> {
        policy::consumption(parse_phase(phase)?, self.inner.params(), z).map_err(to_py)
    }

    #[pyo3(signature = (z, phase="pre"))]
    fn portfolio(&self, z: f64, phase: &str) -> PyResult<f64> {
        policy::portfolio(parse_phase(phase)?, &self.inner, z).map_err(to_py)
    }

    #[pyo3(signature = (w, phase="pre"))]
    fn dual_of_wealth(&self, w: f64, phase: &str) -> PyResult<f64> {
        policy::dual_of_wealth(parse_phase(phase)?, &self.inner, w).map_err(to_py)
    }

    /// Rows `(z, wealth, consumption, portfolio, phase, is_threshold)`.
    #[pyo3(signature = (n=50))]
    fn policy_table(&self, n: usize) -> PyResult<Vec<PolicyTuple>> {
        let rows = policy::policy_table(&self.inner, &GridSpec::new(n)).map_err(to_py)?;
        Ok(rows
            .iter()
            .map(|r| {
                let p = &r.point;
                (p.z, p.wealth, p.consumption, p.portfolio, p.phase.as_str(), r.is_threshold)
            })
            .collect())
    }

    /// Runs the verification suite; returns `(passed, [(name, status, measured, tolerance)])`.
    #[pyo3(signature = (monte_carlo=false, mc_paths=20_000, seed=20_240_601))]
    fn verify(&self, monte_carlo: bool, mc_paths: u64, seed: u64) -> (bool, Vec<CheckTuple>) {
        let opts = VerifyOptions { monte_carlo, mc_paths, master_seed: seed, ..VerifyOptions::default() };
        let report = verify_model(&self.inner, &opts);
        let checks = report
            .checks
            .iter()
            .map(|c| {
                let status = format!("{:?}", c.status).to_lowercase();
                (c.name.to_string(), status, c.measured, c.tolerance)
            })
            .collect();
        (report.passed, checks)
    }

    /// Static-budget Monte Carlo check from `z0` or `w0`.
    #[pyo3(signature = (n_paths, horizon_years, dt=1.0/252.0, seed=0, z0=None, w0=None))]
    #[allow(clippy::too_many_arguments)]
    fn budget_check<'py>(
        &self,
        py: Python<'py>,
        n_paths: u64,
        horizon_years: f64,
        dt: f64,
        seed: u64,
        z0: Option<f64>,
        w0: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = SimConfig { n_paths, horizon_years, dt, master_seed: seed, z0, w0, overlay_disaster: false };
        let r = budget_check(&cfg, &self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("estimate", r.estimate)?;
        d.set_item("std_error", r.std_error)?;
        d.set_item("target", r.target)?;
        d.set_item("tail_bound", r.tail_bound)?;
        d.set_item("pass", r.pass)?;
        d.set_item("form", format!("{:?}", r.form))?;
        Ok(d)
    }

    /// Simulated paths, one dict of equal-length lists per path.
    #[pyo3(signature = (n_paths, horizon_years, dt=1.0/252.0, seed=0, z0=None, w0=None, overlay_disaster=true))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        n_paths: u64,
        horizon_years: f64,
        dt: f64,
        seed: u64,
        z0: Option<f64>,
        w0: Option<f64>,
        overlay_disaster: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cfg = SimConfig { n_paths, horizon_years, dt, master_seed: seed, z0, w0, overlay_disaster };
        let paths = simulate_paths(&cfg, &self.inner).map_err(to_py)?;
        paths
            .into_iter()
            .map(|rec| {
                let d = PyDict::new(py);
                d.set_item("path_id", rec.path_id)?;
                d.set_item("t", rec.t)?;
                d.set_item("z", rec.z)?;
                d.set_item("wealth", rec.wealth)?;
                d.set_item("consumption", rec.consumption)?;
                d.set_item("portfolio", rec.portfolio)?;
                d.set_item("status", rec.status.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
                d.set_item("tau_hit", rec.tau_hit)?;
                d.set_item("tau_d", rec.tau_d)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let show = |x: Option<f64>| x.map_or_else(|| "None".to_string(), |v| format!("{v}"));
        format!(
            "Model(regime={}, z_bar={}, w_bar={})",
            self.inner.regime().as_str(),
            show(self.inner.z_bar()),
            show(self.inner.w_bar())
        )
    }
}

fn serde_json_from_str(text: &str) -> PyResult<RawParams> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid parameters: {e}")))
}

#[pymodule]
fn retirement(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add("DEFAULT_REGIME_TOL", DEFAULT_REGIME_TOL)?;
    Ok(())
}
