//! Python bindings for the momentbound library.
//!
//! The module mirrors the Rust API at the granularity a notebook wants:
//! a `Problem` class plus free functions for bounding, validation, the
//! Monte-Carlo oracle, and SDPA export. Structured results come back as
//! plain dicts/lists (the same shapes the CLI writes as JSON), so nothing
//! here needs wrapper classes on the Python side.
//!
//! Long-running solves release the GIL.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pythonize::pythonize;
use serde_json::{json, Value};

use momentbound::conic::{sdpa, Sense, SolveSettings};
use momentbound::engine::{self, BoundResult, ConsistencyVerdict};
use momentbound::oracle::{self, InitialDistribution, SampleRun};
use momentbound::problem::{
    load_problem, parse_problem_json, problem_to_json, validate, EstimationProblem, QueryKind,
};
use momentbound::relaxation::{assemble_skeleton, AssemblyMode, ObjectiveCoord};

/// An estimation problem: dynamics, support boxes, data, queries.
#[pyclass(frozen, name = "Problem")]
struct PyProblem {
    inner: EstimationProblem,
}

#[pymethods]
impl PyProblem {
    /// Reads a problem file (JSON).
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = load_problem(path).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Parses a problem from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner =
            parse_problem_json(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Semantic diagnostics; entries starting with "error:" are fatal.
    fn validate(&self) -> Vec<String> {
        validate(&self.inner).iter().map(|d| d.to_string()).collect()
    }

    /// The problem serialized back to its JSON schema.
    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&problem_to_json(&self.inner)).expect("serializable")
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.system.state_names().to_vec()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// Number of partition cells, or None without a partition.
    #[getter]
    fn n_cells(&self) -> Option<usize> {
        self.inner.partition.as_ref().map(|p| p.n_cells())
    }

    #[getter]
    fn n_queries(&self) -> usize {
        self.inner.queries.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(states={:?}, times={}, queries={})",
            self.inner.system.state_names(),
            self.inner.times.len(),
            self.inner.queries.len()
        )
    }
}

fn settings(tol_feas: Option<f64>, tol_gap: Option<f64>) -> SolveSettings {
    let mut s = SolveSettings::default();
    if let Some(t) = tol_feas {
        s.tol_feas = t;
    }
    if let Some(t) = tol_gap {
        s.tol_gap = t;
    }
    s
}

fn to_py(py: Python<'_>, value: &Value) -> PyResult<PyObject> {
    Ok(pythonize(py, value)?.unbind())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn bound_to_value(b: &BoundResult) -> Value {
    json!({
        "lower": finite_or_null(b.lower),
        "upper": finite_or_null(b.upper),
        "order": b.order,
        "status_min": b.min_report.status.as_str(),
        "status_max": b.max_report.status.as_str(),
        "invalidated": b.found_infeasible(),
    })
}

fn verdict_to_value(v: &ConsistencyVerdict) -> Value {
    match v {
        ConsistencyVerdict::NotInvalidated { order } => {
            json!({ "verdict": "not_invalidated", "order": order })
        }
        ConsistencyVerdict::Invalidated { order, margin, certificate } => json!({
            "verdict": "invalidated",
            "order": order,
            "margin": margin,
            "certificate": {
                "ray": certificate.ray,
                "residual": certificate.residual,
                "objective": certificate.objective,
            },
        }),
        ConsistencyVerdict::Undecided { order, detail } => {
            json!({ "verdict": "undecided", "order": order, "detail": detail })
        }
    }
}

/// Guaranteed interval for a raw moment `E[x^exponents]` at a grid time.
#[pyfunction]
#[pyo3(signature = (problem, time_index, exponents, order, tol_feas=None, tol_gap=None))]
fn bound_moment(
    py: Python<'_>,
    problem: &PyProblem,
    time_index: usize,
    exponents: Vec<u32>,
    order: u32,
    tol_feas: Option<f64>,
    tol_gap: Option<f64>,
) -> PyResult<PyObject> {
    let s = settings(tol_feas, tol_gap);
    let result = py
        .allow_threads(|| engine::bound_moment(&problem.inner, time_index, &exponents, order, &s))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &bound_to_value(&result))
}

/// Guaranteed interval for the initial probability mass of one cell.
#[pyfunction]
#[pyo3(signature = (problem, cell, order, tol_feas=None, tol_gap=None))]
fn bound_mass(
    py: Python<'_>,
    problem: &PyProblem,
    cell: usize,
    order: u32,
    tol_feas: Option<f64>,
    tol_gap: Option<f64>,
) -> PyResult<PyObject> {
    let s = settings(tol_feas, tol_gap);
    let result = py
        .allow_threads(|| engine::bound_mass(&problem.inner, cell, order, &s))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &bound_to_value(&result))
}

/// Climbs the relaxation ladder; "invalidated" comes with a certified ray.
#[pyfunction]
#[pyo3(signature = (problem, max_order, tol_feas=None, tol_gap=None))]
fn check_consistency(
    py: Python<'_>,
    problem: &PyProblem,
    max_order: u32,
    tol_feas: Option<f64>,
    tol_gap: Option<f64>,
) -> PyResult<PyObject> {
    let s = settings(tol_feas, tol_gap);
    let verdict = py.allow_threads(|| engine::check_consistency(&problem.inner, max_order, &s));
    to_py(py, &verdict_to_value(&verdict))
}

/// Runs every declared query; one dict per query, in declaration order.
#[pyfunction]
#[pyo3(signature = (problem, jobs=None, tol_feas=None, tol_gap=None))]
fn run_queries(
    py: Python<'_>,
    problem: &PyProblem,
    jobs: Option<usize>,
    tol_feas: Option<f64>,
    tol_gap: Option<f64>,
) -> PyResult<PyObject> {
    let s = settings(tol_feas, tol_gap);
    let results = py.allow_threads(|| engine::run_queries(&problem.inner, &s, jobs));
    let doc = engine::results_to_json(&results, &problem.inner);
    to_py(py, &doc["results"])
}

fn sample_run(seed: u64, n_samples: usize, step: f64) -> SampleRun {
    SampleRun { seed, n_samples, step }
}

fn distribution(problem: &PyProblem) -> PyResult<InitialDistribution> {
    InitialDistribution::from_problem(&problem.inner)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Monte-Carlo raw moments of all monomials up to `degree_cap` at every
/// grid time: dict of times / exponents / mean / std_err / n_samples.
#[pyfunction]
#[pyo3(signature = (problem, degree_cap, n_samples=10_000, seed=0, step=1e-3))]
fn sample_moments(
    py: Python<'_>,
    problem: &PyProblem,
    degree_cap: u32,
    n_samples: usize,
    seed: u64,
    step: f64,
) -> PyResult<PyObject> {
    let dist = distribution(problem)?;
    let run = sample_run(seed, n_samples, step);
    let table = py
        .allow_threads(|| {
            oracle::sample_moments(
                problem.inner.system.field(),
                &dist,
                &problem.inner.times,
                degree_cap,
                &run,
            )
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(
        py,
        &json!({
            "times": table.times,
            "exponents": table.exponents,
            "mean": table.mean,
            "std_err": table.std_err,
            "n_samples": table.n_samples,
        }),
    )
}

/// Empirical initial-cell masses under the oracle laws, one per cell.
#[pyfunction]
#[pyo3(signature = (problem, n_samples=10_000, seed=0))]
fn cell_masses(
    py: Python<'_>,
    problem: &PyProblem,
    n_samples: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let partition = problem
        .inner
        .partition
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("problem declares no partition"))?;
    let dist = distribution(problem)?;
    let run = sample_run(seed, n_samples, 1e-3);
    Ok(py.allow_threads(|| oracle::cell_masses(&dist, partition, &run)))
}

/// Sampled moment data widened to `[m(1-slack), m(1+slack)]` intervals,
/// in the problem schema's `moments` shape.
#[pyfunction]
#[pyo3(signature = (problem, degree_cap, slack=0.01, n_samples=10_000, seed=0, step=1e-3))]
fn fabricate_moments(
    py: Python<'_>,
    problem: &PyProblem,
    degree_cap: u32,
    slack: f64,
    n_samples: usize,
    seed: u64,
    step: f64,
) -> PyResult<PyObject> {
    let dist = distribution(problem)?;
    let run = sample_run(seed, n_samples, step);
    let table = py
        .allow_threads(|| {
            oracle::sample_moments(
                problem.inner.system.field(),
                &dist,
                &problem.inner.times,
                degree_cap,
                &run,
            )
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let rows: Vec<Value> = oracle::fabricate_moment_data(&table, slack)
        .iter()
        .map(momentbound::problem::moment_bound_to_json)
        .collect();
    to_py(py, &Value::Array(rows))
}

/// Sampled residual of every relaxation row at the given order: list of
/// dicts with label / mean / std_err. Liouville rows should vanish within
/// a few standard errors when the oracle matches the declared dynamics.
#[pyfunction]
#[pyo3(signature = (problem, order, n_samples=1_000, seed=0, step=1e-3))]
fn liouville_residuals(
    py: Python<'_>,
    problem: &PyProblem,
    order: u32,
    n_samples: usize,
    seed: u64,
    step: f64,
) -> PyResult<PyObject> {
    let assembly = assemble_skeleton(&problem.inner, AssemblyMode::Pointwise, order)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let dist = distribution(problem)?;
    let run = sample_run(seed, n_samples, step);
    let stats = py
        .allow_threads(|| oracle::empirical_row_stats(&assembly, &problem.inner, &dist, &run))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let rows: Vec<Value> = stats
        .iter()
        .map(|s| json!({ "label": s.label, "mean": s.mean, "std_err": s.std_err }))
        .collect();
    to_py(py, &Value::Array(rows))
}

/// Closed-form first and second raw moments of Example 1's state at time t.
#[pyfunction]
fn analytic_example1(t: f64) -> (f64, f64) {
    oracle::analytic_example1(t)
}

/// The relaxation of one declared query in SDPA sparse format.
/// `direction` is "min" or "max".
#[pyfunction]
#[pyo3(signature = (problem, query_index, direction="min"))]
fn sdpa_string(
    problem: &PyProblem,
    query_index: usize,
    direction: &str,
) -> PyResult<String> {
    let sense = match direction {
        "min" => Sense::Minimize,
        "max" => Sense::Maximize,
        other => {
            return Err(PyValueError::new_err(format!(
                "direction must be 'min' or 'max', got {other:?}"
            )))
        }
    };
    let query = problem
        .inner
        .queries
        .get(query_index)
        .ok_or_else(|| PyValueError::new_err(format!("no query {query_index}")))?;
    let (mode, objective) = match &query.kind {
        QueryKind::MomentBound { time_index, exponents } => (
            AssemblyMode::Pointwise,
            ObjectiveCoord::Moment { time_index: *time_index, exponents: exponents.clone() },
        ),
        QueryKind::MassBound { cell } => {
            (AssemblyMode::SpaceSplit, ObjectiveCoord::CellMass { cell: *cell })
        }
        QueryKind::ConsistencyCheck => {
            return Err(PyValueError::new_err(
                "consistency queries have no objective to export",
            ))
        }
    };
    let assembly = assemble_skeleton(&problem.inner, mode, query.order)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let column = assembly
        .objective_column(&objective)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(sdpa::sdpa_string(&assembly.objective_program(column, sense)))
}

#[pymodule]
fn momentbound_py(_py: Python, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(bound_moment, m)?)?;
    m.add_function(wrap_pyfunction!(bound_mass, m)?)?;
    m.add_function(wrap_pyfunction!(check_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(run_queries, m)?)?;
    m.add_function(wrap_pyfunction!(sample_moments, m)?)?;
    m.add_function(wrap_pyfunction!(cell_masses, m)?)?;
    m.add_function(wrap_pyfunction!(fabricate_moments, m)?)?;
    m.add_function(wrap_pyfunction!(liouville_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_example1, m)?)?;
    m.add_function(wrap_pyfunction!(sdpa_string, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
