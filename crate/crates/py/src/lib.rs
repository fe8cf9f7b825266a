//! Python module `chns`: configs, single trajectories, the property checker and
//! the measure estimators.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chns_cli::check::{run_checks, trilinear_suite};
use chns_core::config::RunConfig;
use chns_core::diagnostics::{energy_report, state_norms, ObservableSeries};
use chns_core::integrator::{self, SchemeConfig, SystemState};
use chns_core::measure::{self, ObservableSpec};
use chns_core::noise::NoiseModel;
use chns_core::spectral::{to_physical, GridSpec, PhysicsParams};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Run configuration, read from and written to INI text.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => RunConfig::parse(t).map_err(value_err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    fn to_ini(&self) -> String {
        self.inner.to_ini()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[setter]
    fn set_n(&mut self, n: usize) {
        self.inner.n = n;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.time.dt
    }

    #[setter]
    fn set_dt(&mut self, dt: f64) {
        self.inner.time.dt = dt;
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.time.horizon
    }

    #[setter]
    fn set_horizon(&mut self, t: f64) {
        self.inner.time.horizon = t;
        self.inner.time.burn_in = self.inner.time.burn_in.min(t);
    }

    #[getter]
    fn sigma0(&self) -> f64 {
        self.inner.noise.sigma0
    }

    #[setter]
    fn set_sigma0(&mut self, s: f64) {
        self.inner.noise.sigma0 = s;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.noise.seed
    }

    #[setter]
    fn set_seed(&mut self, s: u64) {
        self.inner.noise.seed = s;
    }

    /// Physics parameters as a dict.
    fn physics(&self) -> BTreeMap<&'static str, f64> {
        let p = self.inner.physics;
        BTreeMap::from([("nu1", p.nu1), ("nu2", p.nu2), ("kappa", p.kappa), ("c1", p.c1), ("c2", p.c2)])
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(N={}, dt={}, T={}, K={}, sigma0={})",
            self.inner.n, self.inner.time.dt, self.inner.time.horizon, self.inner.noise.modes, self.inner.noise.sigma0
        )
    }
}

/// One trajectory advanced step by step.
#[pyclass(name = "Simulation")]
struct PySimulation {
    params: PhysicsParams,
    noise: NoiseModel,
    scheme: SchemeConfig,
    member: u64,
    state: SystemState,
}

impl PySimulation {
    fn advance(&mut self) -> PyResult<()> {
        let inc = self
            .noise
            .sample_increment(self.state.step, self.member, self.scheme.dt)
            .map_err(runtime_err)?;
        let (next, _) = integrator::step(&self.state, &self.params, &self.noise, &self.scheme, &inc).map_err(runtime_err)?;
        if !next.is_finite() {
            return Err(runtime_err(format!("blow-up at step {}", next.step)));
        }
        self.state = next;
        Ok(())
    }
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (config = None, member = 0))]
    fn new(config: Option<PyConfig>, member: u64) -> PyResult<Self> {
        let cfg = config.map_or_else(RunConfig::default, |c| c.inner);
        cfg.validate().map_err(value_err)?;
        let grid = cfg.grid().map_err(value_err)?;
        Ok(Self {
            params: cfg.physics,
            noise: cfg.noise_model().map_err(value_err)?,
            scheme: cfg.scheme_config(),
            member,
            state: cfg.initial.build(grid),
        })
    }

    /// Advances `steps` steps.
    #[pyo3(signature = (steps = 1))]
    fn step(&mut self, py: Python<'_>, steps: u64) -> PyResult<()> {
        for i in 0..steps {
            if i % 256 == 0 {
                py.check_signals()?;
            }
            self.advance()?;
        }
        Ok(())
    }

    /// Advances to time `t` on the step grid.
    fn run_until(&mut self, py: Python<'_>, t: f64) -> PyResult<()> {
        let n = ((t - self.state.t) / self.scheme.dt).round();
        if n > 0.0 {
            self.step(py, n as u64)?;
        }
        Ok(())
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.state.step
    }

    /// Spatial mean of phi.
    fn mass(&self) -> f64 {
        self.state.phi.mean()
    }

    fn max_divergence(&self) -> f64 {
        self.state.u.max_divergence()
    }

    /// Kinetic, interfacial, potential and total energy.
    fn energy(&self) -> BTreeMap<&'static str, f64> {
        let e = energy_report(&self.state, &self.params);
        BTreeMap::from([
            ("kinetic", e.kinetic),
            ("interfacial", e.interfacial),
            ("potential", e.potential),
            ("total", e.total),
        ])
    }

    /// `L^2` norms of `u` and `grad phi`, the `H^1` norm of `phi` and the state norm.
    fn norms(&self) -> BTreeMap<&'static str, f64> {
        let n = state_norms(&self.state);
        BTreeMap::from([("u", n.u), ("grad_phi", n.grad_phi), ("phi_h1", n.phi_h1), ("state", n.state)])
    }

    /// Evaluates an observable written in spec syntax, e.g. `"norm u"`.
    fn observe(&self, spec: &str) -> PyResult<f64> {
        let s: ObservableSpec = spec.parse().map_err(value_err)?;
        Ok(s.evaluate(&self.state, &self.params))
    }

    /// `phi` on the N x N collocation grid, row-major in `y`.
    fn phi_grid(&self) -> Vec<Vec<f64>> {
        grid_rows(self.state.grid(), to_physical(&self.state.phi))
    }

    /// `(u_x, u_y)` on the collocation grid.
    fn velocity_grid(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let g = self.state.grid();
        (
            grid_rows(g, to_physical(self.state.u.x())),
            grid_rows(g, to_physical(self.state.u.y())),
        )
    }
}

fn grid_rows(g: GridSpec, values: Vec<f64>) -> Vec<Vec<f64>> {
    values.chunks(g.n()).map(<[f64]>::to_vec).collect()
}

/// Runs the property checker; returns `{row name: (passed, detail)}`.
#[pyfunction]
fn check(config: PyConfig) -> PyResult<BTreeMap<String, (bool, String)>> {
    let report = run_checks(&config.inner).map_err(runtime_err)?;
    Ok(report.rows.into_iter().map(|r| (r.name, (r.passed, r.detail))).collect())
}

/// Worst normalized trilinear defects over random triples.
#[pyfunction]
#[pyo3(signature = (n = 32, pad = 2, triples = 20, seed = 0))]
fn trilinear(n: usize, pad: usize, triples: usize, seed: u64) -> PyResult<BTreeMap<&'static str, f64>> {
    let grid = GridSpec::new(n, 2.0 * std::f64::consts::PI, pad).map_err(value_err)?;
    let s = trilinear_suite(grid, &PhysicsParams::default(), triples, seed).map_err(runtime_err)?;
    Ok(BTreeMap::from([("b0", s.b0), ("b2", s.b2), ("duality", s.duality)]))
}

/// Time average of a sampled observable over `[t0, t1]`; returns `(mean, variance)`.
#[pyfunction]
fn kb_average(times: Vec<f64>, values: Vec<f64>, t0: f64, t1: f64) -> PyResult<(f64, f64)> {
    let s = ObservableSeries::from_parts("x", "1", times, values).map_err(value_err)?;
    let m = measure::kb_average(&s, t0, t1, 1).map_err(value_err)?;
    Ok((m.mean, m.variance))
}

/// `(R, exit fraction, Chebyshev envelope)` for samples of `||U||^2_H`.
#[pyfunction]
fn tightness(norm_sq: Vec<f64>, radii: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let prof = measure::tightness_profile(&norm_sq, &radii).map_err(value_err)?;
    Ok(prof.into_iter().map(|p| (p.r, p.fraction, p.envelope)).collect())
}

#[pymodule]
fn chns(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(trilinear, m)?)?;
    m.add_function(wrap_pyfunction!(kb_average, m)?)?;
    m.add_function(wrap_pyfunction!(tightness, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
