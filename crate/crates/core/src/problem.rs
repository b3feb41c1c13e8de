//! The game definition and its assumption checks.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{self, ConfigError};
use crate::exprlang::{Expr, ExprError, PointEnv};
use crate::report::{KeyValues, Status};

/// Absolute threshold under which a loop's net switching cost counts as zero.
const LOOP_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Impulse {
    pub jump: Vec<f64>,
    pub cost: f64,
}

/// Complete game definition on a truncated state space `R^n`.
///
/// Mode pairs are addressed by `pair(d1, d2) = d1 * m2 + d2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dimension: usize,
    /// Linear part `A` of `y' + A y = f(...)`.
    pub generator: Vec<Vec<f64>>,
    pub discount: f64,
    pub u1_levels: Vec<f64>,
    pub u2_levels: Vec<f64>,
    pub d1_labels: Vec<String>,
    pub d2_labels: Vec<String>,
    pub dynamics: Vec<Vec<Expr>>,
    pub running_cost: Vec<Expr>,
    /// Player 1 (maximizer) pays these; the diagonal is unused.
    pub switch_cost_1: Vec<Vec<f64>>,
    /// Player 2 (minimizer) pays these; the diagonal is unused.
    pub switch_cost_2: Vec<Vec<f64>>,
    pub impulses: Vec<Impulse>,
    pub bounds: Vec<(f64, f64)>,
}

impl ProblemSpec {
    pub fn m1(&self) -> usize {
        self.d1_labels.len()
    }

    pub fn m2(&self) -> usize {
        self.d2_labels.len()
    }

    pub fn pairs(&self) -> usize {
        self.m1() * self.m2()
    }

    #[inline]
    pub fn pair(&self, d1: usize, d2: usize) -> usize {
        d1 * self.m2() + d2
    }

    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let n = self.dimension;
        DMatrix::from_fn(n, n, |i, j| self.generator[i][j])
    }

    /// Evaluates `f(x, u1, d1, u2, d2)` into `out`.
    #[inline]
    pub fn dynamics_into(
        &self,
        d1: usize,
        d2: usize,
        x: &[f64],
        u1: f64,
        u2: f64,
        out: &mut [f64],
    ) -> Result<(), ExprError> {
        let env = PointEnv { x, u1, u2 };
        for (slot, expr) in out.iter_mut().zip(&self.dynamics[self.pair(d1, d2)]) {
            *slot = expr.eval(&env)?;
        }
        Ok(())
    }

    #[inline]
    pub fn running_cost_at(&self, d1: usize, d2: usize, x: &[f64], u1: f64, u2: f64) -> Result<f64, ExprError> {
        self.running_cost[self.pair(d1, d2)].eval(&PointEnv { x, u1, u2 })
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn box_diameter(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
    }

    /// Pairs `(i, j, s)` with `jump_i + jump_j == jump_s` (componentwise within 1e-12).
    pub fn subadditive_triples(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.impulses.len() {
            for j in i..self.impulses.len() {
                for s in 0..self.impulses.len() {
                    let hit = self.impulses[s].jump.iter().enumerate().all(|(d, &v)| {
                        (self.impulses[i].jump[d] + self.impulses[j].jump[d] - v).abs() <= 1e-12
                    });
                    if hit {
                        out.push((i, j, s));
                    }
                }
            }
        }
        out
    }

    /// `min [l(a) + l(b) - l(a+b)]` over in-list sums, or `None` when no sum is in the list.
    pub fn strictness_gap(&self) -> Option<f64> {
        self.subadditive_triples()
            .into_iter()
            .map(|(i, j, s)| self.impulses[i].cost + self.impulses[j].cost - self.impulses[s].cost)
            .reduce(f64::min)
    }

    /// Smallest off-diagonal switching cost of player 1 and player 2 (`None` for a single mode).
    pub fn min_switch_costs(&self) -> (Option<f64>, Option<f64>) {
        (min_off_diagonal(&self.switch_cost_1), min_off_diagonal(&self.switch_cost_2))
    }

    pub fn min_impulse_cost(&self) -> Option<f64> {
        self.impulses.iter().map(|i| i.cost).reduce(f64::min)
    }
}

fn min_off_diagonal(m: &[Vec<f64>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        }
    }
    best
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ProblemSpec, ConfigError> {
    config::load_config(path).map(|c| c.spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub lipschitz_f: f64,
    pub lipschitz_k: f64,
    pub c1_min: Option<f64>,
    pub c2_min: Option<f64>,
    pub impulse_cost_min: Option<f64>,
    pub strictness_gap: Option<f64>,
    pub k_sup: f64,
    pub f_sup: f64,
    pub warnings: Vec<String>,
    pub samples: usize,
    pub seed: u64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(|c| c.status.is_failure())
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("validation report\n");
        for c in &self.checks {
            out.push_str(&format!("  {:<24} {:<15} {}\n", c.name, c.status, c.detail));
        }
        out.push_str(&format!("  estimated Lipschitz constant of f: {:.6e}\n", self.lipschitz_f));
        out.push_str(&format!("  estimated Lipschitz constant of k: {:.6e}\n", self.lipschitz_k));
        out.push_str(&format!("  sup |k| estimate: {:.6e}\n", self.k_sup));
        out.push_str(&format!("  sup |f| estimate: {:.6e}\n", self.f_sup));
        for w in &self.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        for c in &self.checks {
            kv.text(format!("check.{}.status", c.name), c.status);
            kv.text(format!("check.{}.detail", c.name), &c.detail);
        }
        kv.num("estimate.lipschitz_f", self.lipschitz_f);
        kv.num("estimate.lipschitz_k", self.lipschitz_k);
        kv.num("estimate.k_sup", self.k_sup);
        kv.num("estimate.f_sup", self.f_sup);
        let opt = |kv: &mut KeyValues, key: &str, v: Option<f64>| match v {
            Some(v) => kv.num(key, v),
            None => kv.text(key, "none"),
        };
        opt(&mut kv, "cost.c1_min", self.c1_min);
        opt(&mut kv, "cost.c2_min", self.c2_min);
        opt(&mut kv, "cost.impulse_min", self.impulse_cost_min);
        opt(&mut kv, "cost.strictness_gap", self.strictness_gap);
        kv.text("sampling.samples", self.samples);
        kv.text("sampling.seed", self.seed);
        kv.text("passed", self.passed());
        kv
    }
}

fn random_point(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    spec.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
}

struct Draw {
    d1: usize,
    d2: usize,
    u1: f64,
    u2: f64,
}

fn random_draw(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        d1: rng.random_range(0..spec.m1()),
        d2: rng.random_range(0..spec.m2()),
        u1: spec.u1_levels[rng.random_range(0..spec.u1_levels.len())],
        u2: spec.u2_levels[rng.random_range(0..spec.u2_levels.len())],
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

struct LipschitzEstimate {
    f: f64,
    k: f64,
}

fn estimate_lipschitz(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<LipschitzEstimate, ExprError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.dimension;
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let mut est = LipschitzEstimate { f: 0.0, k: 0.0 };
    for _ in 0..samples {
        let x = random_point(spec, &mut rng);
        let y = random_point(spec, &mut rng);
        let dist = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        let draw = random_draw(spec, &mut rng);
        if dist == 0.0 {
            continue;
        }
        spec.dynamics_into(draw.d1, draw.d2, &x, draw.u1, draw.u2, &mut fx)?;
        spec.dynamics_into(draw.d1, draw.d2, &y, draw.u1, draw.u2, &mut fy)?;
        let df = norm(&fx.iter().zip(&fy).map(|(a, b)| a - b).collect::<Vec<_>>());
        let kx = spec.running_cost_at(draw.d1, draw.d2, &x, draw.u1, draw.u2)?;
        let ky = spec.running_cost_at(draw.d1, draw.d2, &y, draw.u1, draw.u2)?;
        est.f = est.f.max(df / dist);
        est.k = est.k.max((kx - ky).abs() / dist);
    }
    Ok(est)
}

/// Sampled estimate of the Lipschitz constant of `f` in the state variable.
pub fn lipschitz_probe(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<f64, ExprError> {
    estimate_lipschitz(spec, samples, seed).map(|e| e.f)
}

/// Warns when the symmetric part of `A` has a negative eigenvalue.
pub fn generator_warning(spec: &ProblemSpec) -> Option<String> {
    let a = spec.generator_matrix();
    let sym = (&a + a.transpose()) * 0.5;
    let min = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    (min < -1e-12).then(|| {
        format!("symmetric part of the generator has eigenvalue {min:.6e} < 0; -A may not generate a contraction")
    })
}

/// Samples `k`, `f` and the cost tables and reports which assumptions hold.
///
/// Mandatory checks are `running-cost-nonnegative`, `switch-cost-positive`,
/// `impulse-cost-positive`, `impulse-subadditive` and `expressions-evaluate`;
/// any failure among them blocks solving.
pub fn validate_a2(spec: &ProblemSpec, samples: usize, seed: u64) -> ValidationReport {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.dimension;

    let mut eval_error: Option<String> = None;
    let mut negative: Option<(Vec<f64>, usize, usize, f64, f64, f64)> = None;
    let mut k_sup = 0.0f64;
    let mut f_sup = 0.0f64;
    let mut fx = vec![0.0; n];
    for s in 0..samples {
        // Corners of the box first, then uniform draws.
        let x = if s < (1 << n) {
            spec.bounds.iter().enumerate().map(|(d, &(lo, hi))| if s >> d & 1 == 1 { hi } else { lo }).collect()
        } else {
            random_point(spec, &mut rng)
        };
        let draw = random_draw(spec, &mut rng);
        match spec.running_cost_at(draw.d1, draw.d2, &x, draw.u1, draw.u2) {
            Ok(k) => {
                k_sup = k_sup.max(k.abs());
                if k < 0.0 && negative.is_none() {
                    negative = Some((x.clone(), draw.d1, draw.d2, draw.u1, draw.u2, k));
                }
            }
            Err(e) => {
                eval_error.get_or_insert_with(|| format!("running cost at {x:?}: {e}"));
            }
        }
        match spec.dynamics_into(draw.d1, draw.d2, &x, draw.u1, draw.u2, &mut fx) {
            Ok(()) => f_sup = f_sup.max(norm(&fx)),
            Err(e) => {
                eval_error.get_or_insert_with(|| format!("dynamics at {x:?}: {e}"));
            }
        }
    }
    checks.push(ValidationCheck {
        name: "expressions-evaluate",
        status: Status::from_bool(eval_error.is_none()),
        detail: eval_error.unwrap_or_else(|| format!("{samples} samples evaluated")),
    });
    checks.push(ValidationCheck {
        name: "running-cost-nonnegative",
        status: Status::from_bool(negative.is_none()),
        detail: match negative {
            Some((x, d1, d2, u1, u2, k)) => format!(
                "k = {k:.6e} < 0 at x = {x:?}, modes ({}, {}), controls ({u1}, {u2})",
                spec.d1_labels[d1], spec.d2_labels[d2]
            ),
            None => format!("k >= 0 on {samples} samples"),
        },
    });

    let (c1_min, c2_min) = spec.min_switch_costs();
    let mut bad_switch = Vec::new();
    for (player, matrix) in [(1, &spec.switch_cost_1), (2, &spec.switch_cost_2)] {
        for (i, row) in matrix.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j && !(c > 0.0 && c.is_finite()) {
                    bad_switch.push(format!("c{player}[{i}][{j}] = {c}"));
                }
            }
        }
    }
    checks.push(ValidationCheck {
        name: "switch-cost-positive",
        status: if spec.m1() == 1 && spec.m2() == 1 {
            Status::NotApplicable
        } else {
            Status::from_bool(bad_switch.is_empty())
        },
        detail: if bad_switch.is_empty() {
            "off-diagonal switching costs bounded below by c_0 > 0".to_string()
        } else {
            format!("switching costs must satisfy c_0 > 0; offending entries: {}", bad_switch.join(", "))
        },
    });

    let bad_impulse: Vec<String> = spec
        .impulses
        .iter()
        .enumerate()
        .filter(|(_, imp)| !(imp.cost > 0.0 && imp.cost.is_finite()))
        .map(|(i, imp)| format!("l[{i}] = {}", imp.cost))
        .collect();
    checks.push(ValidationCheck {
        name: "impulse-cost-positive",
        status: if spec.impulses.is_empty() {
            Status::NotApplicable
        } else {
            Status::from_bool(bad_impulse.is_empty())
        },
        detail: if bad_impulse.is_empty() {
            "all impulse costs positive".to_string()
        } else {
            format!("offending impulse costs: {}", bad_impulse.join(", "))
        },
    });

    let triples = spec.subadditive_triples();
    let violations: Vec<String> = triples
        .iter()
        .filter(|&&(i, j, s)| !(spec.impulses[s].cost < spec.impulses[i].cost + spec.impulses[j].cost))
        .map(|&(i, j, s)| {
            format!(
                "l[{s}] = {} >= l[{i}] + l[{j}] = {}",
                spec.impulses[s].cost,
                spec.impulses[i].cost + spec.impulses[j].cost
            )
        })
        .collect();
    checks.push(ValidationCheck {
        name: "impulse-subadditive",
        status: if triples.is_empty() {
            Status::NotApplicable
        } else {
            Status::from_bool(violations.is_empty())
        },
        detail: if triples.is_empty() {
            "no impulse sum lies in the impulse list".to_string()
        } else if violations.is_empty() {
            format!("{} in-list sums strictly subadditive", triples.len())
        } else {
            violations.join("; ")
        },
    });
    checks.push(ValidationCheck {
        name: "impulse-cost-growth",
        status: Status::NotApplicable,
        detail: "growth of l at infinity is not checkable on a finite impulse list".to_string(),
    });

    let lipschitz = estimate_lipschitz(spec, samples, seed ^ 0x9e37_79b9_7f4a_7c15)
        .unwrap_or(LipschitzEstimate { f: f64::NAN, k: f64::NAN });

    ValidationReport {
        checks,
        lipschitz_f: lipschitz.f,
        lipschitz_k: lipschitz.k,
        c1_min,
        c2_min,
        impulse_cost_min: spec.min_impulse_cost(),
        strictness_gap: spec.strictness_gap(),
        k_sup,
        f_sup,
        warnings: generator_warning(spec).into_iter().collect(),
        samples,
        seed,
    }
}

/// Status of the cheaper-switching and nonzero-loop conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct YongReport {
    pub y1: Status,
    pub c2_min: Option<f64>,
    pub impulse_cost_min: Option<f64>,
    pub y2: Status,
    pub loops_examined: usize,
    /// A loop of mode pairs whose net switching cost vanishes.
    pub zero_loop: Option<Vec<(usize, usize)>>,
}

/// Evaluates the cheaper-switching condition `min c2 < min l` and the
/// nonzero-loop condition over every closed loop of mode pairs of length
/// at most `m1 * m2` in which each step changes exactly one player's mode.
/// Both are informational.
pub fn check_y1_y2(spec: &ProblemSpec) -> YongReport {
    let (_, c2_min) = spec.min_switch_costs();
    let l_min = spec.min_impulse_cost();
    let y1 = match c2_min {
        None => Status::NotApplicable,
        Some(c) => Status::from_bool(c < l_min.unwrap_or(f64::INFINITY)),
    };

    let (m1, m2) = (spec.m1(), spec.m2());
    let nodes = m1 * m2;
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut zero_loop = None;
    let mut path = Vec::with_capacity(nodes);
    for start in 0..nodes {
        path.clear();
        path.push(start);
        enumerate_loops(spec, start, nodes, &mut path, &mut seen, &mut zero_loop);
    }
    let y2 = Status::from_bool(zero_loop.is_none());
    YongReport {
        y1,
        c2_min,
        impulse_cost_min: l_min,
        y2,
        loops_examined: seen.len(),
        zero_loop: zero_loop.map(|l: Vec<usize>| l.into_iter().map(|p| (p / m2, p % m2)).collect()),
    }
}

fn step_cost(spec: &ProblemSpec, from: usize, to: usize) -> f64 {
    let m2 = spec.m2();
    let (a1, a2) = (from / m2, from % m2);
    let (b1, b2) = (to / m2, to % m2);
    let c1 = if a1 != b1 { spec.switch_cost_1[a1][b1] } else { 0.0 };
    let c2 = if a2 != b2 { spec.switch_cost_2[a2][b2] } else { 0.0 };
    c1 - c2
}

fn neighbours(spec: &ProblemSpec, node: usize) -> impl Iterator<Item = usize> + '_ {
    let m2 = spec.m2();
    let (d1, d2) = (node / m2, node % m2);
    let p1 = (0..spec.m1()).filter(move |&o| o != d1).map(move |o| o * m2 + d2);
    let p2 = (0..m2).filter(move |&o| o != d2).map(move |o| d1 * m2 + o);
    p1.chain(p2)
}

fn canonical_rotation(cycle: &[usize]) -> Vec<usize> {
    (0..cycle.len())
        .map(|r| cycle[r..].iter().chain(&cycle[..r]).copied().collect::<Vec<_>>())
        .min()
        .expect("nonempty cycle")
}

// Each loop is generated from its smallest node; walks that revisit that
// node produce rotated duplicates, removed through the canonical rotation.
fn enumerate_loops(
    spec: &ProblemSpec,
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    seen: &mut HashSet<Vec<usize>>,
    zero_loop: &mut Option<Vec<usize>>,
) {
    let last = *path.last().expect("path starts nonempty");
    for next in neighbours(spec, last).collect::<Vec<_>>() {
        if next < start {
            continue;
        }
        if next == start && path.len() >= 2 {
            let canon = canonical_rotation(path);
            if seen.insert(canon) {
                let total: f64 = path
                    .iter()
                    .zip(path.iter().skip(1).chain(std::iter::once(&start)))
                    .map(|(&a, &b)| step_cost(spec, a, b))
                    .sum();
                if total.abs() <= LOOP_ZERO_TOL && zero_loop.is_none() {
                    *zero_loop = Some(path.clone());
                }
            }
        }
        if path.len() < max_len {
            path.push(next);
            enumerate_loops(spec, start, max_len, path, seen, zero_loop);
            path.pop();
        }
    }
}
