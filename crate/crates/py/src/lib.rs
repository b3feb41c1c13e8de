//! Python bindings: expressions, problems, solving, simulation and checks.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use hybrid_isaacs::cli::{analysis, resolve_run, ResolvedRun, SolverFlags, DEFAULT_SAMPLES};
use hybrid_isaacs::config::{load_config, parse_config, Config};
use hybrid_isaacs::exprlang;
use hybrid_isaacs::hybridsim::{self, Policy, PolicyParams};
use hybrid_isaacs::io::write_value_csv;
use hybrid_isaacs::problem::validate_a2;
use hybrid_isaacs::solver::{solve_with, ValueField};
use hybrid_isaacs::verify::{run_checks, Suite, VerifyOptions};
use hybrid_isaacs::SemiLagrangian;

create_exception!(hybrid_isaacs, HybridIsaacsError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    HybridIsaacsError::new_err(e.to_string())
}

fn kv_map(kv: &hybrid_isaacs::report::KeyValues) -> BTreeMap<String, String> {
    kv.render()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// A parsed expression over `x0..`, `u1` and `u2`.
#[pyclass(name = "Expr", frozen)]
struct PyExpr(exprlang::Expr);

#[pymethods]
impl PyExpr {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        exprlang::parse(text).map(PyExpr).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Evaluates with variables given by name, e.g. `{"x0": 1.0, "u1": -1.0}`.
    fn eval(&self, vars: HashMap<String, f64>) -> PyResult<f64> {
        self.0.eval(&vars).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn free_vars(&self) -> Vec<String> {
        self.0.free_vars().into_iter().map(|v| v.to_string()).collect()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.0)
    }
}

/// A game loaded from a TOML problem file.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    config: Config,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_config(&path).map(|config| PyProblem { config }).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_config(text).map(|config| PyProblem { config }).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.config.to_toml_string()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.config.spec.dimension
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.config.spec.discount
    }

    #[getter]
    fn d1_labels(&self) -> Vec<String> {
        self.config.spec.d1_labels.clone()
    }

    #[getter]
    fn d2_labels(&self) -> Vec<String> {
        self.config.spec.d2_labels.clone()
    }

    #[getter]
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.config.spec.bounds.clone()
    }

    /// Runs the assumption checks; returns `(passed, report)`.
    #[pyo3(signature = (samples = DEFAULT_SAMPLES, seed = 0))]
    fn validate(&self, samples: usize, seed: u64) -> (bool, BTreeMap<String, String>) {
        let r = validate_a2(&self.config.spec, samples, seed);
        (r.passed(), kv_map(&r.to_kv()))
    }

    /// Loop conditions, Isaacs gap, Lipschitz and bound estimates.
    #[pyo3(signature = (samples = DEFAULT_SAMPLES, seed = 0))]
    fn analyze(&self, samples: usize, seed: u64) -> PyResult<BTreeMap<String, String>> {
        let run = resolve(&self.config, SolverFlags::default())?;
        analysis(&self.config, &run, samples, seed).map(|kv| kv_map(&kv)).map_err(|e| err(e.message))
    }

    fn __repr__(&self) -> String {
        let s = &self.config.spec;
        format!("Problem(dimension={}, modes={}x{}, impulses={})", s.dimension, s.m1(), s.m2(), s.impulses.len())
    }
}

fn resolve(config: &Config, flags: SolverFlags) -> PyResult<ResolvedRun> {
    resolve_run(config, &flags).map_err(|e| err(e.message))
}

/// A solved value field together with the settings that produced it.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    config: Config,
    run: ResolvedRun,
    field: ValueField,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    history: Vec<f64>,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn dt(&self) -> f64 {
        self.run.solver.dt
    }

    #[getter]
    fn variant(&self) -> String {
        self.run.solver.variant.to_string()
    }

    #[getter]
    fn counts(&self) -> Vec<usize> {
        self.run.grid.counts().to_vec()
    }

    fn grid_points(&self) -> Vec<Vec<f64>> {
        (0..self.run.grid.len()).map(|i| self.run.grid.point(i)).collect()
    }

    /// Nodal values of one mode pair, in grid order.
    fn values(&self, d1: usize, d2: usize) -> PyResult<Vec<f64>> {
        self.check_modes(d1, d2)?;
        Ok(self.field.slice(d1, d2).to_vec())
    }

    /// Interpolated value at an arbitrary state (clamped to the box).
    fn value_at(&self, x: Vec<f64>, d1: usize, d2: usize) -> PyResult<f64> {
        self.check_modes(d1, d2)?;
        if x.len() != self.config.spec.dimension {
            return Err(PyValueError::new_err("state has the wrong dimension"));
        }
        Ok(self.run.grid.interpolate(self.field.slice(d1, d2), &x))
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        write_value_csv(&path, &self.config.spec, &self.run.grid, &self.field, &BTreeMap::new()).map_err(err)
    }
}

impl PySolution {
    fn check_modes(&self, d1: usize, d2: usize) -> PyResult<()> {
        let s = &self.config.spec;
        if d1 >= s.m1() || d2 >= s.m2() {
            return Err(PyValueError::new_err("mode index out of range"));
        }
        Ok(())
    }
}

#[pyfunction]
fn parse_expr(text: &str) -> PyResult<PyExpr> {
    PyExpr::new(text)
}

/// Solves by fixed-point iteration. Unset arguments fall back to the
/// problem file, then to built-in defaults.
#[pyfunction]
#[pyo3(signature = (problem, points = None, dt = None, tolerance = None, max_iterations = None, init = None, variant = None))]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    points: Option<Vec<usize>>,
    dt: Option<f64>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    init: Option<String>,
    variant: Option<String>,
) -> PyResult<PySolution> {
    let flags = SolverFlags { grid: points, dt, tol: tolerance, max_iters: max_iterations, init, variant };
    let config = problem.config.clone();
    let run = resolve(&config, flags)?;
    let result = py
        .detach(|| {
            let scheme = SemiLagrangian::new(&config.spec, &run.grid, run.solver.dt)?;
            solve_with(&scheme, &run.solver)
        })
        .map_err(err)?;
    Ok(PySolution {
        config,
        run,
        iterations: result.iterations,
        converged: result.converged,
        history: result.history,
        field: result.field,
    })
}

/// Rolls out the feedback policy of `solution` and returns the trajectory
/// as a dict of lists plus the cost decomposition.
#[pyfunction]
#[pyo3(signature = (solution, start, d1 = 0, d2 = 0, horizon = None, action_tol = None))]
fn simulate<'py>(
    py: Python<'py>,
    solution: &PySolution,
    start: Vec<f64>,
    d1: usize,
    d2: usize,
    horizon: Option<f64>,
    action_tol: Option<f64>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    solution.check_modes(d1, d2)?;
    let spec = &solution.config.spec;
    if start.len() != spec.dimension {
        return Err(PyValueError::new_err("start has the wrong dimension"));
    }
    let params = PolicyParams {
        dt: solution.run.solver.dt,
        action_tol: action_tol.unwrap_or(solution.run.action_tol),
        variant: solution.run.solver.variant,
    };
    let policy = Policy::new(spec, &solution.run.grid, &solution.field, params).map_err(err)?;
    let horizon = horizon.unwrap_or(100f64.ln() / spec.discount);
    let traj = hybridsim::simulate(&policy, &start, d1, d2, horizon).map_err(err)?;

    let out = PyDict::new(py);
    out.set_item("times", &traj.times)?;
    out.set_item("states", &traj.states)?;
    out.set_item("modes", &traj.modes)?;
    out.set_item("controls", &traj.controls)?;
    out.set_item(
        "switches_p1",
        traj.switches_p1.iter().map(|e| (e.time, e.from, e.to, e.cost)).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "switches_p2",
        traj.switches_p2.iter().map(|e| (e.time, e.from, e.to, e.cost)).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "impulses",
        traj.impulses.iter().map(|e| (e.time, e.index, e.jump.clone(), e.cost)).collect::<Vec<_>>(),
    )?;
    let costs = PyDict::new(py);
    costs.set_item("running", traj.costs.running)?;
    costs.set_item("switching_p1", traj.costs.switching_p1)?;
    costs.set_item("switching_p2", traj.costs.switching_p2)?;
    costs.set_item("impulse", traj.costs.impulse)?;
    costs.set_item("total", traj.costs.total())?;
    out.set_item("costs", costs)?;
    out.set_item("cost", hybridsim::evaluate_cost(&traj, spec.discount))?;
    Ok(out)
}

/// Runs property checks; returns `(passed, report)`.
#[pyfunction]
#[pyo3(signature = (problem, suite = "all", seed = 0, solution = None))]
fn verify(
    py: Python<'_>,
    problem: &PyProblem,
    suite: &str,
    seed: u64,
    solution: Option<&PySolution>,
) -> PyResult<(bool, BTreeMap<String, String>)> {
    let suite: Suite = suite.parse().map_err(PyValueError::new_err)?;
    let run = match solution {
        Some(s) => s.run.clone(),
        None => resolve(&problem.config, SolverFlags::default())?,
    };
    let options = VerifyOptions { suite, seed, field: solution.map(|s| s.field.clone()), ..VerifyOptions::default() };
    let spec = &problem.config.spec;
    let report = py.detach(|| run_checks(spec, &run.grid, &run.solver, &options)).map_err(err)?;
    Ok((report.passed(), kv_map(&report.to_kv())))
}

#[pymodule(name = "hybrid_isaacs")]
fn hybrid_isaacs_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HybridIsaacsError", m.py().get_type::<HybridIsaacsError>())?;
    m.add_class::<PyExpr>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(parse_expr, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
