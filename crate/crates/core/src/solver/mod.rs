//! Grids, interpolation, the semigroup step and the fixed-point driver.

pub mod expm;
mod field;
mod grid;

pub use expm::{semigroup_step, SemigroupError};
pub use field::ValueField;
pub use grid::{GridError, GridSpec, Stencil, MAX_DIM};

use crate::exprlang::ExprError;
use crate::operators::{HamiltonianVariant, SchemeError, SemiLagrangian};
use crate::problem::ProblemSpec;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    /// `sup |k| / lambda`, an upper bound of every fixed point.
    Upper,
    Custom(ValueField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: Init,
    pub variant: HamiltonianVariant,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            init: Init::Zero,
            variant: HamiltonianVariant::Plus,
        }
    }
}

/// `0.5 * min(h) / max(1, sup |f|)` with `sup |f|` taken over grid nodes,
/// controls and mode pairs; keeps the characteristic foot near its cell.
pub fn default_dt(spec: &ProblemSpec, grid: &GridSpec) -> Result<f64, ExprError> {
    Ok(0.5 * grid.min_step() / dynamics_sup(spec, grid)?.max(1.0))
}

pub fn dynamics_sup(spec: &ProblemSpec, grid: &GridSpec) -> Result<f64, ExprError> {
    let mut f = vec![0.0; spec.dimension];
    let mut sup = 0.0f64;
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        for d1 in 0..spec.m1() {
            for d2 in 0..spec.m2() {
                for &u1 in &spec.u1_levels {
                    for &u2 in &spec.u2_levels {
                        spec.dynamics_into(d1, d2, &x, u1, u2, &mut f)?;
                        sup = sup.max(f.iter().map(|v| v * v).sum::<f64>().sqrt());
                    }
                }
            }
        }
    }
    Ok(sup)
}

/// Recommended ceiling for `dt`; larger steps only draw a warning.
pub fn dt_warning(spec: &ProblemSpec, grid: &GridSpec, dt: f64) -> Option<String> {
    let sup = dynamics_sup(spec, grid).ok()?;
    let ceiling = spec.box_diameter() / sup;
    (sup > 0.0 && dt > ceiling)
        .then(|| format!("dt = {dt} exceeds box diameter / sup|f| = {ceiling:.3e}"))
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: ValueField,
    pub iterations: usize,
    /// Sup-norm change of each iteration.
    pub history: Vec<f64>,
    /// Every iterate dominated the previous one (meaningful for zero init).
    pub monotone: bool,
    pub converged: bool,
}

impl SolveResult {
    pub fn last_change(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Iterates `V <- T[V]` until the sup-norm change drops to the tolerance.
/// A non-converged run still returns its last iterate.
pub fn solve(spec: &ProblemSpec, grid: &GridSpec, config: &SolverConfig) -> Result<SolveResult, SchemeError> {
    let scheme = SemiLagrangian::new(spec, grid, config.dt)?;
    solve_with(&scheme, config)
}

pub fn solve_with(scheme: &SemiLagrangian<'_>, config: &SolverConfig) -> Result<SolveResult, SchemeError> {
    let spec = scheme.spec();
    let mut current = match &config.init {
        Init::Zero => scheme.zero_field(),
        Init::Upper => {
            let bound = scheme.running_cost_sup() / spec.discount;
            scheme.zero_field().map(|_| bound)
        }
        Init::Custom(field) => {
            if field.shape() != scheme.zero_field().shape() {
                return Err(SchemeError::Grid("initial field shape does not match the grid".into()));
            }
            field.clone()
        }
    };
    let mut next = scheme.zero_field();
    let mut history = Vec::new();
    let mut monotone = true;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        scheme.bellman_update_into(&current, config.variant, &mut next);
        let change = next.sup_distance(&current);
        monotone &= current.le(&next);
        history.push(change);
        std::mem::swap(&mut current, &mut next);
        if change <= config.tolerance {
            converged = true;
            break;
        }
    }
    if config.init == Init::Zero {
        debug_assert!(monotone, "iterates from zero must be nondecreasing");
    }
    Ok(SolveResult { iterations: history.len(), field: current, history, monotone, converged })
}
