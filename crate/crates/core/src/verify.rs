//! Executable checks of the structural properties of the fixed point and of
//! the update operator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::operators::{isaacs_gap, HamiltonianVariant, SchemeError, SemiLagrangian};
use crate::problem::ProblemSpec;
use crate::report::{fmt_f64, KeyValues, Status};
use crate::solver::{solve, solve_with, GridSpec, Init, SolverConfig, ValueField};

/// Measured Isaacs gaps at or below this count as zero.
pub const ISAACS_ZERO_TOL: f64 = 1e-12;
/// Sup-norm agreement required between the two Hamiltonian orderings.
pub const ISAACS_VALUE_TOL: f64 = 1e-12;
/// Rounding slack on the probe inequalities.
pub const PROBE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// The property being checked, in words.
    pub property: &'static str,
    pub status: Status,
    pub tolerance: f64,
    pub measurements: BTreeMap<String, f64>,
    pub note: String,
}

impl CheckResult {
    fn new(name: &'static str, property: &'static str, tolerance: f64) -> Self {
        Self { name, property, status: Status::Pass, tolerance, measurements: BTreeMap::new(), note: String::new() }
    }

    fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        self.measurements.insert(key.to_string(), value);
        self
    }

    pub fn measurement(&self, key: &str) -> Option<f64> {
        self.measurements.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(|c| c.status.is_failure())
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("verification report (seed {})\n", self.seed);
        for c in &self.checks {
            out.push_str(&format!("[{}] {} -- {}\n", c.status, c.name, c.property));
            out.push_str(&format!("    tolerance: {}\n", fmt_f64(c.tolerance)));
            for (k, v) in &c.measurements {
                out.push_str(&format!("    {k}: {}\n", fmt_f64(*v)));
            }
            if !c.note.is_empty() {
                out.push_str(&format!("    note: {}\n", c.note));
            }
        }
        out.push_str(if self.passed() { "result: pass\n" } else { "result: FAIL\n" });
        out
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.text("seed", self.seed);
        kv.text("passed", self.passed());
        for c in &self.checks {
            let p = format!("check.{}", c.name);
            kv.text(format!("{p}.status"), c.status);
            kv.text(format!("{p}.property"), c.property);
            kv.num(format!("{p}.tolerance"), c.tolerance);
            for (k, v) in &c.measurements {
                kv.num(format!("{p}.{k}"), *v);
            }
            if !c.note.is_empty() {
                kv.text(format!("{p}.note"), &c.note);
            }
        }
        kv
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// `M+[V] - tol <= V <= min(M-[V], N[V]) + tol` at every node and mode pair.
pub fn obstacle_chain_check(scheme: &SemiLagrangian<'_>, v: &ValueField, tol: f64) -> CheckResult {
    let mut out = CheckResult::new(
        "obstacle-chain",
        "upper switching obstacle <= V <= min(lower switching obstacle, impulse obstacle)",
        tol,
    );
    let spec = scheme.spec();
    let points = scheme.grid().len();
    let mut worst = (0.0f64, None);
    let mut active = false;
    for d1 in 0..spec.m1() {
        for d2 in 0..spec.m2() {
            for idx in 0..points {
                let value = v.get(d1, d2, idx);
                let upper = scheme.upper_obstacle(v, d1, d2, idx);
                let ceiling = scheme.lower_obstacle(v, d1, d2, idx).min(scheme.impulse_obstacle(v, d1, d2, idx).0);
                active |= upper.is_finite() || ceiling.is_finite();
                let violation = (upper - value).max(value - ceiling).max(0.0);
                if violation > worst.0 {
                    worst = (violation, Some((d1, d2, idx)));
                }
            }
        }
    }
    out.measure("max_violation", worst.0);
    if let Some((d1, d2, idx)) = worst.1 {
        out.note = format!(
            "worst at modes ({}, {}), x = {:?}",
            spec.d1_labels[d1],
            spec.d2_labels[d2],
            scheme.grid().point(idx)
        );
    } else if !active {
        out.note = "no obstacle is active; holds vacuously".into();
    }
    out.status = Status::from_bool(worst.0 <= tol);
    out
}

/// Where the impulse obstacle binds, a second impulse from the post-jump
/// state must cost at least the strictness gap `min [l(a) + l(b) - l(a+b)]`.
pub fn post_impulse_strictness(scheme: &SemiLagrangian<'_>, v: &ValueField, bind_tol: f64, tol: f64) -> CheckResult {
    let mut out = CheckResult::new(
        "post-impulse-strictness",
        "at impulse-binding points, N[V] - V >= strictness gap at the post-jump state",
        tol,
    );
    let spec = scheme.spec();
    let grid = scheme.grid();
    let Some(gap) = spec.strictness_gap() else {
        out.status = Status::NotApplicable;
        out.note = if spec.impulses.is_empty() {
            "no impulses".into()
        } else {
            "no impulse sum lies in the impulse list".into()
        };
        return out;
    };
    out.measure("strictness_gap", gap);
    let mut binding = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut worst_at = None;
    for d1 in 0..spec.m1() {
        for d2 in 0..spec.m2() {
            let slice = v.slice(d1, d2);
            for idx in 0..grid.len() {
                let (imp, best) = scheme.impulse_obstacle(v, d1, d2, idx);
                let Some(j) = best else { continue };
                if (v.get(d1, d2, idx) - imp).abs() > bind_tol {
                    continue;
                }
                binding += 1;
                let y = scheme.jump_target_point(idx, j);
                let value_after = grid.interpolate(slice, &y);
                let (again, _) = crate::operators::impulse_obstacle_with(spec, |k| {
                    grid.interpolate(slice, &crate::operators::jump_target(spec, &y, k))
                });
                let margin = again - value_after;
                if margin < min_margin {
                    min_margin = margin;
                    worst_at = Some(y);
                }
            }
        }
    }
    out.measure("binding_points", binding as f64);
    out.measure("min_margin", min_margin);
    if let Some(y) = worst_at {
        out.note = format!("smallest margin at post-jump state {y:?}");
    } else {
        out.note = "impulse obstacle binds nowhere".into();
    }
    out.status = Status::from_bool(min_margin >= gap - tol);
    out
}

/// With a vanishing Isaacs gap, the two Hamiltonian orderings must give the
/// same fixed point.
pub fn isaacs_value_equality(
    spec: &ProblemSpec,
    grid: &GridSpec,
    config: &SolverConfig,
    costate_samples: usize,
    seed: u64,
) -> Result<CheckResult, SchemeError> {
    let mut out = CheckResult::new(
        "isaacs-value-equality",
        "min-max and max-min orderings give the same value when the Isaacs gap vanishes",
        ISAACS_VALUE_TOL,
    );
    let gap = isaacs_gap(spec, grid, costate_samples, seed)?;
    out.measure("isaacs_gap", gap);
    if gap > ISAACS_ZERO_TOL {
        out.status = Status::Skipped;
        out.note = format!("Isaacs gap {} > {}; precondition fails", fmt_f64(gap), fmt_f64(ISAACS_ZERO_TOL));
        return Ok(out);
    }
    let scheme = SemiLagrangian::new(spec, grid, config.dt)?;
    let plus = solve_with(&scheme, &SolverConfig { variant: HamiltonianVariant::Plus, ..config.clone() })?;
    let minus = solve_with(&scheme, &SolverConfig { variant: HamiltonianVariant::Minus, ..config.clone() })?;
    let diff = plus.field.sup_distance(&minus.field);
    out.measure("sup_difference", diff);
    out.measure("iterations_plus", plus.iterations as f64);
    out.measure("iterations_minus", minus.iterations as f64);
    let table_gap = discrete_saddle_gap(&scheme, &plus.field);
    out.measure("discrete_saddle_gap", table_gap);
    if table_gap > ISAACS_ZERO_TOL {
        out.status = Status::Skipped;
        out.note = format!(
            "one-step tables have no saddle point (gap {}); the orderings differ at the scale of dt",
            fmt_f64(table_gap)
        );
        return Ok(out);
    }
    out.status = Status::from_bool(plus.converged && minus.converged && diff <= ISAACS_VALUE_TOL);
    if !(plus.converged && minus.converged) {
        out.note = "a solve did not converge".into();
    }
    Ok(out)
}

/// Largest difference between the min-max and max-min of the one-step
/// continuation tables over all nodes and mode pairs, evaluated at `v`.
pub fn discrete_saddle_gap(scheme: &SemiLagrangian<'_>, v: &ValueField) -> f64 {
    let spec = scheme.spec();
    let mut gap = 0.0f64;
    for d1 in 0..spec.m1() {
        for d2 in 0..spec.m2() {
            for idx in 0..scheme.grid().len() {
                let (plus, _, _) = scheme.continuation(v, d1, d2, idx, HamiltonianVariant::Plus);
                let (minus, _, _) = scheme.continuation(v, d1, d2, idx, HamiltonianVariant::Minus);
                gap = gap.max((plus - minus).abs());
            }
        }
    }
    gap
}

/// Fixed points reached from below (zero) and from above (`sup|k| / lambda`)
/// agree within ten solver tolerances. An empirical probe of uniqueness,
/// not a proof.
pub fn two_sided_uniqueness(spec: &ProblemSpec, grid: &GridSpec, config: &SolverConfig) -> Result<CheckResult, SchemeError> {
    let tol = 10.0 * config.tolerance;
    let mut out = CheckResult::new(
        "two-sided-uniqueness",
        "fixed points from zero and from the upper bound coincide (empirical uniqueness probe)",
        tol,
    );
    let scheme = SemiLagrangian::new(spec, grid, config.dt)?;
    let low = solve_with(&scheme, &SolverConfig { init: Init::Zero, ..config.clone() })?;
    let high = solve_with(&scheme, &SolverConfig { init: Init::Upper, ..config.clone() })?;
    let diff = low.field.sup_distance(&high.field);
    out.measure("sup_difference", diff);
    out.measure("iterations_zero", low.iterations as f64);
    out.measure("iterations_upper", high.iterations as f64);
    out.measure("monotone_from_zero", if low.monotone { 1.0 } else { 0.0 });
    let ok = low.converged && high.converged && low.monotone && diff <= tol;
    if !(low.converged && high.converged) {
        out.note = format!("converged: zero-init {}, upper-init {}", low.converged, high.converged);
    }
    out.status = Status::from_bool(ok);
    Ok(out)
}

fn obstacles_inactive(spec: &ProblemSpec) -> bool {
    spec.m1() == 1 && spec.m2() == 1 && spec.impulses.is_empty()
}

/// Random ordered field pairs `V <= W`: `T` must be monotone and
/// nonexpansive; without obstacles it must contract by `e^{-lambda dt}` and
/// shift constants by exactly that factor.
pub fn operator_probes(scheme: &SemiLagrangian<'_>, variant: HamiltonianVariant, trials: usize, seed: u64) -> CheckResult {
    let spec = scheme.spec();
    let mut out = CheckResult::new(
        "operator-probes",
        "T is monotone and nonexpansive; without obstacles it contracts by e^{-lambda dt}",
        PROBE_SLACK,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = scheme.zero_field();
    let (m1, m2, points) = zero.shape();
    let scale = (scheme.running_cost_sup() / spec.discount).max(1.0);
    let inactive = obstacles_inactive(spec);
    let decay = scheme.decay();
    let (mut monotone_viol, mut nonexp_viol, mut contract_viol) = (0usize, 0usize, 0usize);
    let mut shift_err = 0.0f64;
    for _ in 0..trials {
        let v = ValueField::from_fn(m1, m2, points, |_, _, _| rng.random_range(0.0..scale));
        let w = ValueField::from_fn(m1, m2, points, |a, b, p| v.get(a, b, p) + rng.random_range(0.0..scale));
        let tv = scheme.bellman_update(&v, variant);
        let tw = scheme.bellman_update(&w, variant);
        if !tv.le(&tw) {
            monotone_viol += 1;
        }
        let dist = v.sup_distance(&w);
        let tdist = tv.sup_distance(&tw);
        if tdist > dist + PROBE_SLACK {
            nonexp_viol += 1;
        }
        if inactive {
            if tdist > decay * dist + PROBE_SLACK {
                contract_viol += 1;
            }
            let c = rng.random_range(0.0..scale);
            let shifted = scheme.bellman_update(&v.map(|x| x + c), variant);
            let expected = tv.map(|x| x + decay * c);
            shift_err = shift_err.max(shifted.sup_distance(&expected));
        }
        if tv != scheme.bellman_update(&v.clone(), variant) {
            out.note = "T is not deterministic".into();
            monotone_viol += 1;
        }
    }
    out.measure("trials", trials as f64);
    out.measure("monotonicity_violations", monotone_viol as f64);
    out.measure("nonexpansiveness_violations", nonexp_viol as f64);
    if inactive {
        out.measure("contraction_violations", contract_viol as f64);
        out.measure("constant_shift_error", shift_err);
    } else if out.note.is_empty() {
        out.note = "obstacles active: contraction and shift identity not applicable".into();
    }
    out.status = Status::from_bool(
        monotone_viol == 0 && nonexp_viol == 0 && contract_viol == 0 && shift_err <= PROBE_SLACK,
    );
    out
}

/// `||T^m[V] - V|| <= m * ||T[V] - V|| + tol`, the m-step dynamic
/// programming identity at an approximate fixed point.
pub fn dpp_consistency(
    scheme: &SemiLagrangian<'_>,
    v: &ValueField,
    variant: HamiltonianVariant,
    steps: usize,
    tol: f64,
) -> CheckResult {
    let mut out = CheckResult::new(
        "dpp-consistency",
        "m-step dynamic programming: ||T^m V - V|| <= m ||T V - V|| + tol",
        tol,
    );
    let residual = scheme.bellman_update(v, variant).sup_distance(v);
    let mut iterate = v.clone();
    for _ in 0..steps {
        iterate = scheme.bellman_update(&iterate, variant);
    }
    let drift = iterate.sup_distance(v);
    out.measure("steps", steps as f64);
    out.measure("fixed_point_residual", residual);
    out.measure("m_step_drift", drift);
    out.status = Status::from_bool(drift <= steps as f64 * residual + tol);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    All,
    Chain,
    Impulse,
    Isaacs,
    Uniqueness,
    Probes,
    Dpp,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "all" => Suite::All,
            "chain" => Suite::Chain,
            "impulse" => Suite::Impulse,
            "isaacs" => Suite::Isaacs,
            "uniqueness" => Suite::Uniqueness,
            "probes" => Suite::Probes,
            "dpp" => Suite::Dpp,
            other => return Err(format!("unknown suite `{other}`")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub seed: u64,
    pub chain_tol: f64,
    pub strictness_tol: f64,
    pub probe_trials: usize,
    pub probe_points: usize,
    pub dpp_steps: Vec<usize>,
    pub dpp_tol: f64,
    pub costate_samples: usize,
    /// Field to check instead of a fresh solve.
    pub field: Option<ValueField>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            seed: 0,
            chain_tol: 1e-9,
            strictness_tol: 1e-6,
            probe_trials: 100,
            probe_points: 5,
            dpp_steps: vec![1, 10, 100],
            dpp_tol: 1e-10,
            costate_samples: 8,
            field: None,
        }
    }
}

/// Runs the selected checks. Field-based checks use `options.field` when
/// given, otherwise a zero-initialized solve under `config`.
pub fn run_checks(
    spec: &ProblemSpec,
    grid: &GridSpec,
    config: &SolverConfig,
    options: &VerifyOptions,
) -> Result<VerificationReport, SchemeError> {
    let wants = |s: Suite| options.suite == Suite::All || options.suite == s;
    let mut checks = Vec::new();
    let scheme = SemiLagrangian::new(spec, grid, config.dt)?;
    let needs_field = wants(Suite::Chain) || wants(Suite::Impulse) || wants(Suite::Dpp);
    let mut solve_note = None;
    let field = match (&options.field, needs_field) {
        (Some(f), _) => Some(f.clone()),
        (None, true) => {
            let result = solve_with(&scheme, &SolverConfig { init: Init::Zero, ..config.clone() })?;
            if !result.converged {
                solve_note = Some(format!("solve did not converge in {} iterations", result.iterations));
            }
            Some(result.field)
        }
        (None, false) => None,
    };
    let bind_tol = 10.0 * config.tolerance;

    if let Some(v) = &field {
        if wants(Suite::Chain) {
            checks.push(obstacle_chain_check(&scheme, v, options.chain_tol));
        }
        if wants(Suite::Impulse) {
            checks.push(post_impulse_strictness(&scheme, v, bind_tol, options.strictness_tol));
        }
        if wants(Suite::Dpp) {
            for &m in &options.dpp_steps {
                let mut c = dpp_consistency(&scheme, v, config.variant, m, options.dpp_tol);
                c.name = match m {
                    1 => "dpp-consistency-1",
                    10 => "dpp-consistency-10",
                    100 => "dpp-consistency-100",
                    _ => "dpp-consistency",
                };
                checks.push(c);
            }
        }
    }
    if wants(Suite::Isaacs) {
        checks.push(isaacs_value_equality(spec, grid, config, options.costate_samples, options.seed)?);
    }
    if wants(Suite::Uniqueness) {
        checks.push(two_sided_uniqueness(spec, grid, config)?);
    }
    if wants(Suite::Probes) {
        let small = GridSpec::for_problem(spec, &[options.probe_points]).map_err(|e| SchemeError::Grid(e.to_string()))?;
        let probe_scheme = SemiLagrangian::new(spec, &small, config.dt)?;
        checks.push(operator_probes(&probe_scheme, config.variant, options.probe_trials, options.seed));
    }
    if let Some(note) = solve_note {
        for c in checks.iter_mut() {
            if c.note.is_empty() {
                c.note = note.clone();
            }
        }
    }
    Ok(VerificationReport { seed: options.seed, checks })
}

/// Convenience: solve and return the field, for callers that verify a
/// field separately.
pub fn solve_field(spec: &ProblemSpec, grid: &GridSpec, config: &SolverConfig) -> Result<ValueField, SchemeError> {
    solve(spec, grid, config).map(|r| r.field)
}
