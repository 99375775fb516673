//! Python bindings for `collabq`.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use collabq::experiments::{self, SweepSpec};
use collabq::policies::{self, Action, DecisionContext, Station};
use collabq::simulator::{self, SimConfig};
use collabq::thresholds::{self, Orientation};
use collabq::{presets, solver, CostRegime, State, TieRouting};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "SystemParams", module = "collabq_py", frozen, from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    inner: collabq::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (c1, c2, mu1, mu2, h0, h1, h2))]
    fn new(c1: u32, c2: u32, mu1: f64, mu2: f64, h0: f64, h1: f64, h2: f64) -> PyResult<Self> {
        let inner = collabq::SystemParams::new(c1, c2, mu1, mu2, h0, h1, h2).map_err(err)?;
        Ok(PySystemParams { inner })
    }

    #[getter]
    fn c1(&self) -> u32 {
        self.inner.c1
    }

    #[getter]
    fn c2(&self) -> u32 {
        self.inner.c2
    }

    #[getter]
    fn mu1(&self) -> f64 {
        self.inner.mu1
    }

    #[getter]
    fn mu2(&self) -> f64 {
        self.inner.mu2
    }

    #[getter]
    fn h0(&self) -> f64 {
        self.inner.h0
    }

    #[getter]
    fn h1(&self) -> f64 {
        self.inner.h1
    }

    #[getter]
    fn h2(&self) -> f64 {
        self.inner.h2
    }

    /// "lowcost" when independent service is costlier per job, else "highcost".
    fn regime(&self) -> &'static str {
        match self.inner.cost_regime(TieRouting::default()) {
            CostRegime::Lowcost => "lowcost",
            CostRegime::Highcost => "highcost",
        }
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "SystemParams(c1={}, c2={}, mu1={}, mu2={}, h0={}, h1={}, h2={})",
            p.c1, p.c2, p.mu1, p.mu2, p.h0, p.h1, p.h2
        )
    }
}

#[pyclass(name = "ValueTable", module = "collabq_py", frozen)]
struct PyValueTable {
    inner: Arc<solver::ValueTable>,
}

#[pymethods]
impl PyValueTable {
    #[getter]
    fn i_max(&self) -> u32 {
        self.inner.i_max()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn value(&self, i: u32, k: u32, l: u32) -> PyResult<f64> {
        self.inner.get(State::new(i, k, l)).map_err(err)
    }

    /// `v(i,k,l) - v(i,k-1,l+1)`; needs an optimal table.
    fn diff(&self, i: u32, k: u32, l: u32) -> PyResult<f64> {
        solver::diff(&self.inner).map_err(err)?.get(State::new(i, k, l)).map_err(err)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

#[pyclass(name = "Policy", module = "collabq_py", frozen)]
struct PyPolicy {
    inner: policies::Policy,
}

#[pymethods]
impl PyPolicy {
    /// Builds `heuristic`, `pi1`..`pi4`, `tpi1`..`tpi4`, or `optimal` (which
    /// needs an optimal `table`).
    #[new]
    #[pyo3(signature = (params, id, table=None))]
    fn new(params: &PySystemParams, id: &str, table: Option<&PyValueTable>) -> PyResult<Self> {
        let inner = policies::policy_by_id(&params.inner, id, table.map(|t| t.inner.clone())).map_err(err)?;
        Ok(PyPolicy { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    /// Action at a decision point: 0 independent, 1 collaborative.
    /// `station` is the station that just completed a job (1 or 2).
    fn decide(&self, q: u32, k_busy: u32, l_busy: u32, station: u8) -> PyResult<u8> {
        let completed_at = match station {
            1 => Station::Station1,
            2 => Station::Station2,
            s => return Err(PyValueError::new_err(format!("station must be 1 or 2, got {s}"))),
        };
        let ctx = DecisionContext::new(q, k_busy, l_busy, completed_at);
        self.inner.decide(&ctx).map(Action::bit).map_err(err)
    }
}

#[pyfunction]
fn example(name: &str) -> PyResult<PySystemParams> {
    presets::example(name)
        .map(|inner| PySystemParams { inner })
        .ok_or_else(|| PyValueError::new_err(format!("unknown example `{name}`")))
}

#[pyfunction]
fn solve_optimal(params: &PySystemParams, i_max: u32) -> PyValueTable {
    PyValueTable { inner: Arc::new(solver::solve_optimal(&params.inner, i_max)) }
}

#[pyfunction]
fn evaluate(params: &PySystemParams, policy: &PyPolicy, i_max: u32) -> PyResult<PyValueTable> {
    let table = solver::solve_under_policy(&params.inner, &policy.inner, i_max).map_err(err)?;
    Ok(PyValueTable { inner: Arc::new(table) })
}

/// Actual and heuristic thresholds; infinite entries are `None`.
#[pyfunction(name = "thresholds")]
fn threshold_profiles<'py>(py: Python<'py>, params: &PySystemParams) -> PyResult<Bound<'py, PyDict>> {
    let regime = params.inner.cost_regime(TieRouting::default());
    let (actual, heuristic) = thresholds::solve_thresholds(&params.inner, regime).map_err(err)?;
    let out = PyDict::new(py);
    let orientation = match actual.orientation {
        Orientation::Collaborative => "k",
        Orientation::Independent => "l",
    };
    out.set_item("index", orientation)?;
    out.set_item("indices", actual.entries.iter().map(|e| e.index).collect::<Vec<_>>())?;
    out.set_item("actual", actual.entries.iter().map(|e| e.threshold.finite()).collect::<Vec<_>>())?;
    out.set_item("heuristic", heuristic.entries.iter().map(|e| e.threshold.finite()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Monte Carlo estimate; returns `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (params, policy, i0, k0, l0, replications=10_000, seed=7))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    params: &PySystemParams,
    policy: &PyPolicy,
    i0: u32,
    k0: u32,
    l0: u32,
    replications: u64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let config = SimConfig { seed, replications, initial_state: State::new(i0, k0, l0) };
    let (p, pol) = (params.inner, &policy.inner);
    let est = py.detach(|| simulator::estimate(&p, pol, &config)).map_err(err)?;
    Ok((est.mean, est.std_error))
}

/// Invariant suite over the given points; returns `(passed, failing names)`.
#[pyfunction]
fn verify(py: Python<'_>, points: Vec<PySystemParams>, i_max: u32) -> PyResult<(bool, Vec<String>)> {
    let pts: Vec<_> = points.iter().map(|p| p.inner).collect();
    let report = py.detach(|| experiments::verify(&pts, i_max)).map_err(err)?;
    Ok((report.passed, report.failures().map(|r| r.name.clone()).collect()))
}

/// Aggregated CSV for one of the numerical-study tables (5 to 10).
#[pyfunction]
fn sweep_table(py: Python<'_>, number: u32) -> PyResult<String> {
    let spec = SweepSpec::study_table(number).map_err(err)?;
    let result = py.detach(|| experiments::sweep(&spec)).map_err(err)?;
    let mut buf = Vec::new();
    result.write_table_csv(&mut buf).map_err(err)?;
    String::from_utf8(buf).map_err(err)
}

#[pymodule]
fn collabq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyValueTable>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(example, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_table, m)?)?;
    Ok(())
}
