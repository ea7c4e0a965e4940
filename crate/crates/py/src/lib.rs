//! Python bindings: diagrams, simulation, junction evaluation, statics and stability.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use ltm_core::config::NetworkConfig;
use ltm_core::junction::{self, JunctionModel, JunctionSpec};
use ltm_core::kernel::reconstruct_field;
use ltm_core::sim::run;
use ltm_core::statics::{self, DecayEstimate, StaticsSolution};
use ltm_core::{scenarios, LtmError};

create_exception!(ltm, EngineError, PyException, "Infeasible data, junction contract faults and other engine errors.");

fn to_py(e: LtmError) -> PyErr {
    match e.root() {
        LtmError::Config(_) | LtmError::Domain(_) | LtmError::Cfl { .. } => PyValueError::new_err(e.to_string()),
        _ => EngineError::new_err(e.to_string()),
    }
}

fn parse_model(s: &str) -> PyResult<JunctionModel> {
    match s {
        "invariant" => Ok(JunctionModel::InvariantFair),
        "noninvariant" => Ok(JunctionModel::NonInvariantFairMerge),
        other => other.parse().map_err(to_py),
    }
}

/// Triangular fundamental diagram.
#[pyclass(name = "TriangularFD", frozen)]
struct PyFd {
    inner: ltm_core::TriangularFD,
}

#[pymethods]
impl PyFd {
    #[new]
    fn new(v_free: f64, w_back: f64, k_jam: f64) -> PyResult<Self> {
        Ok(Self { inner: ltm_core::TriangularFD::new(v_free, w_back, k_jam).map_err(to_py)? })
    }

    fn flux(&self, k: f64) -> PyResult<f64> {
        self.inner.flux(k).map_err(to_py)
    }

    #[getter]
    fn capacity(&self) -> f64 {
        self.inner.capacity()
    }

    #[getter]
    fn k_crit(&self) -> f64 {
        self.inner.k_crit()
    }

    #[getter]
    fn k_jam(&self) -> f64 {
        self.inner.k_jam()
    }

    /// Under- and over-critical densities carrying flux `q`.
    fn branch_densities(&self, q: f64) -> (f64, f64) {
        self.inner.branch_densities(q)
    }

    fn __repr__(&self) -> String {
        format!("TriangularFD(v_free={}, w_back={}, k_jam={})", self.inner.v_free(), self.inner.w_back(), self.inner.k_jam())
    }
}

/// Result of a simulation run.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: ltm_core::sim::Trajectory,
}

impl PyTrajectory {
    fn index(&self, link: &str) -> PyResult<usize> {
        self.inner.network.link_index(link).ok_or_else(|| PyValueError::new_err(format!("unknown link `{link}`")))
    }
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn links(&self) -> Vec<String> {
        self.inner.network.links.iter().map(|l| l.id().to_string()).collect()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn max_conservation_drift(&self) -> f64 {
        self.inner.max_conservation_drift
    }

    #[getter]
    fn origin_queues(&self) -> Vec<f64> {
        self.inner.origin_queues.clone()
    }

    /// Per-step inflow `f` of a link.
    fn inflow(&self, link: &str) -> PyResult<Vec<f64>> {
        let a = self.index(link)?;
        Ok(self.inner.records.iter().map(|r| r.links[a].inflow).collect())
    }

    fn outflow(&self, link: &str) -> PyResult<Vec<f64>> {
        let a = self.index(link)?;
        Ok(self.inner.records.iter().map(|r| r.links[a].outflow).collect())
    }

    /// Queue and vacancy sizes at the start of every recorded step.
    fn queue_vacancy(&self, link: &str) -> PyResult<Vec<(f64, f64)>> {
        let a = self.index(link)?;
        Ok(self.inner.records.iter().map(|r| (r.links[a].lambda, r.links[a].gamma)).collect())
    }

    /// Breakpoints `(t, F)` and `(t, G)` of the boundary cumulative curves.
    fn cumulative_curves(&self, link: &str) -> PyResult<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        let l = &self.inner.network.links[self.index(link)?];
        Ok((l.upstream().samples().collect(), l.downstream().samples().collect()))
    }

    /// Density `k[i][j]` at `(xs[j], ts[i])`.
    fn density_field(&self, link: &str, xs: Vec<f64>, ts: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let l = &self.inner.network.links[self.index(link)?];
        let data = l.domain_data().map_err(to_py)?;
        Ok(reconstruct_field(&data, &xs, &ts).map_err(to_py)?.k)
    }
}

fn run_config(cfg: &NetworkConfig) -> PyResult<PyTrajectory> {
    let traj = run(cfg.build_network().map_err(to_py)?, cfg.sim_config().map_err(to_py)?).map_err(to_py)?;
    Ok(PyTrajectory { inner: traj })
}

/// Simulate a TOML configuration document.
#[pyfunction]
fn simulate(config: &str) -> PyResult<PyTrajectory> {
    run_config(&NetworkConfig::parse(config).map_err(to_py)?)
}

#[pyfunction]
fn simulate_file(path: &str) -> PyResult<PyTrajectory> {
    run_config(&NetworkConfig::load(path).map_err(to_py)?)
}

/// TOML document of a shipped scenario.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    scenarios::preset(name).and_then(|c| c.to_toml()).map_err(to_py)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    scenarios::PRESET_NAMES.to_vec()
}

#[pyclass(name = "JunctionFlows", frozen, get_all)]
struct PyFlows {
    theta: f64,
    g: Vec<f64>,
    f: Vec<f64>,
}

fn spec(in_caps: Vec<f64>, out_caps: Vec<f64>, turning: Vec<Vec<f64>>, model: &str) -> PyResult<JunctionSpec> {
    JunctionSpec::new(
        in_caps.into_iter().enumerate().map(|(i, c)| (format!("in{i}"), c)).collect(),
        out_caps.into_iter().enumerate().map(|(i, c)| (format!("out{i}"), c)).collect(),
        turning,
        parse_model(model)?,
    )
    .map_err(to_py)
}

/// Fluxes through one junction.
#[pyfunction]
#[pyo3(signature = (in_caps, out_caps, turning, demands, supplies, model = "invariant"))]
fn junction_fluxes(
    in_caps: Vec<f64>,
    out_caps: Vec<f64>,
    turning: Vec<Vec<f64>>,
    demands: Vec<f64>,
    supplies: Vec<f64>,
    model: &str,
) -> PyResult<PyFlows> {
    let s = spec(in_caps, out_caps, turning, model)?;
    let fl = junction::evaluate(&s, &demands, &supplies, None).map_err(to_py)?;
    Ok(PyFlows { theta: fl.theta, g: fl.g, f: fl.f })
}

#[pyfunction]
#[pyo3(signature = (in_caps, out_caps, turning, demands, supplies, model = "invariant"))]
fn check_invariance(
    in_caps: Vec<f64>,
    out_caps: Vec<f64>,
    turning: Vec<Vec<f64>>,
    demands: Vec<f64>,
    supplies: Vec<f64>,
    model: &str,
) -> PyResult<bool> {
    let s = spec(in_caps, out_caps, turning, model)?;
    junction::check_invariance(&s, &demands, &supplies).map_err(to_py)
}

/// One link of a stationary solution.
#[pyclass(name = "StationaryLink", frozen, get_all)]
struct PyStationaryLink {
    link: String,
    kind: String,
    q: f64,
    beta_lo: f64,
    beta_hi: f64,
    #[pyo3(name = "lambda_")]
    lambda: f64,
    gamma: f64,
}

fn solutions(sols: Vec<StaticsSolution>) -> Vec<Vec<PyStationaryLink>> {
    sols.into_iter()
        .map(|s| {
            s.links
                .into_iter()
                .map(|l| PyStationaryLink {
                    link: l.link,
                    kind: l.kind.to_string(),
                    q: l.q,
                    beta_lo: l.beta_lo,
                    beta_hi: l.beta_hi,
                    lambda: l.lambda,
                    gamma: l.gamma,
                })
                .collect()
        })
        .collect()
}

#[pyfunction]
fn solve_statics_dm(c0: f64, c1: f64, c2: f64, c3: f64, xi: f64) -> PyResult<Vec<Vec<PyStationaryLink>>> {
    Ok(solutions(statics::solve_statics_dm(c0, c1, c2, c3, xi).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (c1, c2, c3, d1, d2, s3, model = "invariant"))]
fn solve_statics_merge(
    c1: f64,
    c2: f64,
    c3: f64,
    d1: f64,
    d2: f64,
    s3: f64,
    model: &str,
) -> PyResult<Vec<Vec<PyStationaryLink>>> {
    Ok(solutions(statics::solve_statics_merge(c1, c2, c3, d1, d2, s3, parse_model(model)?).map_err(to_py)?))
}

#[pyfunction]
fn poincare_iterate(f1: f64, xi: f64, c3: f64) -> PyResult<f64> {
    statics::poincare_iterate(f1, xi, c3).map_err(to_py)
}

/// `"stable"`, `"unstable"` or `"unstable (marginal)"`.
#[pyfunction]
fn classify_stability(xi: f64) -> PyResult<String> {
    Ok(statics::classify_stability(xi).map_err(to_py)?.to_string())
}

/// Signed per-period deviation ratio, or `None` for a zero signal.
#[pyfunction]
fn measure_decay_ratio(signal: Vec<(f64, f64)>, period: f64, fixed_point: f64) -> PyResult<Option<f64>> {
    Ok(match statics::measure_decay_ratio(&signal, period, fixed_point).map_err(to_py)? {
        DecayEstimate::Ratio { value, .. } => Some(value),
        DecayEstimate::ZeroSignal => None,
    })
}

#[pymodule]
fn ltm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EngineError", m.py().get_type::<EngineError>())?;
    m.add_class::<PyFd>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyFlows>()?;
    m.add_class::<PyStationaryLink>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_file, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(junction_fluxes, m)?)?;
    m.add_function(wrap_pyfunction!(check_invariance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_statics_dm, m)?)?;
    m.add_function(wrap_pyfunction!(solve_statics_merge, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(classify_stability, m)?)?;
    m.add_function(wrap_pyfunction!(measure_decay_ratio, m)?)?;
    Ok(())
}
