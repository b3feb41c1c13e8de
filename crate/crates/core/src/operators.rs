//! Hamiltonians, obstacle operators and the discrete dynamic programming update.
//!
//! Player 1 maximizes and may switch its mode at a cost `c1`; player 2
//! minimizes and may switch at a cost `c2` or apply an impulse `xi` at a
//! cost `l(xi)`. The one-step update on a grid point `x` is
//!
//! ```text
//! T[V](x) = max( M+[V](x), min( M-[V](x), N[V](x), C[V](x) ) )
//! ```
//!
//! where `C` is the continuation value of a semi-Lagrangian step of length
//! `dt`: running cost integrated with weight `(1 - e^{-lambda dt}) / lambda`
//! plus the discounted, interpolated value at `S(dt) x + dt f(x, u1, u2)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::ExprError;
use crate::problem::ProblemSpec;
use crate::solver::expm::{semigroup_step, SemigroupError};
use crate::solver::{GridSpec, ValueField};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error("grid does not match the problem: {0}")]
    Grid(String),
}

/// Order of the inner optimization over the finite control grids.
///
/// `Plus` is `min_{u1} max_{u2}` in the Hamiltonian, i.e. player 1 commits
/// first in the continuation step (`max_{u1} min_{u2}`). `Minus` swaps both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianVariant {
    Plus,
    Minus,
}

impl std::str::FromStr for HamiltonianVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plus" | "+" => Ok(Self::Plus),
            "minus" | "-" => Ok(Self::Minus),
            other => Err(format!("unknown variant `{other}` (expected plus or minus)")),
        }
    }
}

impl std::fmt::Display for HamiltonianVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Plus => "plus",
            Self::Minus => "minus",
        })
    }
}

/// Saddle value of a payoff table where player 1 maximizes and player 2
/// minimizes, in the commitment order of `variant`. Returns the value and
/// the saddle controls; ties go to the lowest index.
#[inline]
pub fn saddle(
    n1: usize,
    n2: usize,
    variant: HamiltonianVariant,
    mut entry: impl FnMut(usize, usize) -> f64,
) -> (f64, usize, usize) {
    match variant {
        HamiltonianVariant::Plus => {
            let (mut best, mut b1, mut b2) = (f64::NEG_INFINITY, 0, 0);
            for i1 in 0..n1 {
                let (mut worst, mut a2) = (f64::INFINITY, 0);
                for i2 in 0..n2 {
                    let e = entry(i1, i2);
                    if e < worst {
                        worst = e;
                        a2 = i2;
                    }
                }
                if worst > best {
                    best = worst;
                    b1 = i1;
                    b2 = a2;
                }
            }
            (best, b1, b2)
        }
        HamiltonianVariant::Minus => {
            let (mut best, mut b1, mut b2) = (f64::INFINITY, 0, 0);
            for i2 in 0..n2 {
                let (mut worst, mut a1) = (f64::NEG_INFINITY, 0);
                for i1 in 0..n1 {
                    let e = entry(i1, i2);
                    if e > worst {
                        worst = e;
                        a1 = i1;
                    }
                }
                if worst < best {
                    best = worst;
                    b1 = a1;
                    b2 = i2;
                }
            }
            (best, b1, b2)
        }
    }
}

/// `H(x, p)`: `Plus` is `min_{u1} max_{u2} [<-p, f> - k]`, `Minus` is
/// `max_{u2} min_{u1} [<-p, f> - k]`.
pub fn hamiltonian(
    spec: &ProblemSpec,
    variant: HamiltonianVariant,
    d1: usize,
    d2: usize,
    x: &[f64],
    p: &[f64],
) -> Result<f64, ExprError> {
    let (n1, n2) = (spec.u1_levels.len(), spec.u2_levels.len());
    let mut table = vec![0.0; n1 * n2];
    let mut f = vec![0.0; spec.dimension];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let (u1, u2) = (spec.u1_levels[i1], spec.u2_levels[i2]);
            spec.dynamics_into(d1, d2, x, u1, u2, &mut f)?;
            let inner: f64 = p.iter().zip(&f).map(|(a, b)| -a * b).sum();
            table[i1 * n2 + i2] = inner - spec.running_cost_at(d1, d2, x, u1, u2)?;
        }
    }
    // H = -(saddle of -g): the Hamiltonian's outer player is the inner one
    // of the continuation step.
    let (v, _, _) = saddle(n1, n2, variant, |i1, i2| -table[i1 * n2 + i2]);
    Ok(-v)
}

/// `max |H+ - H-|` over grid points, mode pairs and costates. The costates
/// are `0`, `+-e_i` and `costate_samples` uniform draws from `[-1, 1]^n`.
pub fn isaacs_gap(spec: &ProblemSpec, grid: &GridSpec, costate_samples: usize, seed: u64) -> Result<f64, ExprError> {
    let n = spec.dimension;
    let mut costates = vec![vec![0.0; n]];
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            costates.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..costate_samples {
        costates.push((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect());
    }
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            let mut gap = 0.0f64;
            for d1 in 0..spec.m1() {
                for d2 in 0..spec.m2() {
                    for p in &costates {
                        let plus = hamiltonian(spec, HamiltonianVariant::Plus, d1, d2, &x, p)?;
                        let minus = hamiltonian(spec, HamiltonianVariant::Minus, d1, d2, &x, p)?;
                        gap = gap.max((plus - minus).abs());
                    }
                }
            }
            Ok(gap)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// `M-`: cheapest player-2 switch, `min_{e != d2} [V^{d1,e} + c2(d2, e)]`,
/// with the minimizing mode. `+inf` and `None` when player 2 has one mode.
pub fn switch_obstacle_lower_with(
    spec: &ProblemSpec,
    d1: usize,
    d2: usize,
    value: impl Fn(usize, usize) -> f64,
) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for e in (0..spec.m2()).filter(|&e| e != d2) {
        let v = value(d1, e) + spec.switch_cost_2[d2][e];
        if v < best.0 {
            best = (v, Some(e));
        }
    }
    best
}

/// `M+`: best player-1 switch, `max_{e != d1} [V^{e,d2} - c1(d1, e)]`,
/// with the maximizing mode. `-inf` and `None` when player 1 has one mode.
pub fn switch_obstacle_upper_with(
    spec: &ProblemSpec,
    d1: usize,
    d2: usize,
    value: impl Fn(usize, usize) -> f64,
) -> (f64, Option<usize>) {
    let mut best = (f64::NEG_INFINITY, None);
    for e in (0..spec.m1()).filter(|&e| e != d1) {
        let v = value(e, d2) - spec.switch_cost_1[d1][e];
        if v > best.0 {
            best = (v, Some(e));
        }
    }
    best
}

/// `N`: cheapest impulse, `min_j [V(clamp(x + xi_j)) + l(xi_j)]`, with the
/// minimizing impulse index. `value_after(j)` returns the value at the
/// post-jump state.
pub fn impulse_obstacle_with(spec: &ProblemSpec, value_after: impl Fn(usize) -> f64) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for (j, imp) in spec.impulses.iter().enumerate() {
        let v = value_after(j) + imp.cost;
        if v < best.0 {
            best = (v, Some(j));
        }
    }
    best
}

pub fn switch_obstacle_lower(spec: &ProblemSpec, v: &ValueField, idx: usize, d1: usize, d2: usize) -> f64 {
    switch_obstacle_lower_with(spec, d1, d2, |a, b| v.get(a, b, idx)).0
}

pub fn switch_obstacle_upper(spec: &ProblemSpec, v: &ValueField, idx: usize, d1: usize, d2: usize) -> f64 {
    switch_obstacle_upper_with(spec, d1, d2, |a, b| v.get(a, b, idx)).0
}

/// Post-jump state `clamp(x + xi)`.
pub fn jump_target(spec: &ProblemSpec, x: &[f64], impulse: usize) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().zip(&spec.impulses[impulse].jump).map(|(a, b)| a + b).collect();
    spec.clamp(&mut y);
    y
}

pub fn impulse_obstacle(spec: &ProblemSpec, grid: &GridSpec, v: &ValueField, x: &[f64], d1: usize, d2: usize) -> f64 {
    let slice = v.slice(d1, d2);
    impulse_obstacle_with(spec, |j| grid.interpolate(slice, &jump_target(spec, x, j))).0
}

/// Pointwise diagnostics of a field against the quasi-variational system.
///
/// All vectors are indexed like a [`ValueField`]: `pair * points + idx`.
/// Obstacle gaps are infinite where the corresponding obstacle is inactive.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub points: usize,
    pub interior: Vec<bool>,
    /// `lambda V + <A x, DV> + H(x, DV)`.
    pub pde: Vec<f64>,
    /// `V - M+`.
    pub upper_gap: Vec<f64>,
    /// `M- - V`.
    pub lower_gap: Vec<f64>,
    /// `N - V`.
    pub impulse_gap: Vec<f64>,
    /// `min{ max(pde, V - M-, V - N), V - M+ }`.
    pub hji1: Vec<f64>,
    /// `max{ min(pde, V - M+), V - M-, V - N }`.
    pub hji2: Vec<f64>,
    /// `|T[V] - V|`.
    pub fixed_point: Vec<f64>,
}

impl ResidualField {
    fn max_abs_where(&self, values: &[f64], interior_only: bool) -> f64 {
        values
            .iter()
            .enumerate()
            .filter(|(i, _)| !interior_only || self.interior[i % self.points])
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn max_hji1_interior(&self) -> f64 {
        self.max_abs_where(&self.hji1, true)
    }

    pub fn max_hji2_interior(&self) -> f64 {
        self.max_abs_where(&self.hji2, true)
    }

    pub fn max_fixed_point(&self) -> f64 {
        self.max_abs_where(&self.fixed_point, false)
    }
}

/// Precomputed semi-Lagrangian discretization of one problem on one grid.
///
/// Running costs and characteristic feet are tabulated once per
/// `(mode pair, point, u1, u2)`, so one update only interpolates.
pub struct SemiLagrangian<'a> {
    spec: &'a ProblemSpec,
    grid: &'a GridSpec,
    dt: f64,
    decay: f64,
    weight: f64,
    semigroup: DMatrix<f64>,
    controls: usize,
    running: Vec<f64>,
    feet: Vec<f64>,
    jumps: Vec<f64>,
}

impl<'a> SemiLagrangian<'a> {
    pub fn new(spec: &'a ProblemSpec, grid: &'a GridSpec, dt: f64) -> Result<Self, SchemeError> {
        if grid.dim() != spec.dimension {
            return Err(SchemeError::Grid(format!("grid dimension {} vs problem {}", grid.dim(), spec.dimension)));
        }
        let semigroup = semigroup_step(&spec.generator_matrix(), dt)?;
        let n = spec.dimension;
        let (n1, n2) = (spec.u1_levels.len(), spec.u2_levels.len());
        let controls = n1 * n2;
        let points = grid.len();
        let m2 = spec.m2();

        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.pairs() * points)
            .into_par_iter()
            .map(|j| {
                let (pair, idx) = (j / points, j % points);
                let (d1, d2) = (pair / m2, pair % m2);
                let x = grid.point(idx);
                let sx = &semigroup * DVector::from_column_slice(&x);
                let mut costs = Vec::with_capacity(controls);
                let mut feet = Vec::with_capacity(controls * n);
                let mut f = vec![0.0; n];
                for &u1 in &spec.u1_levels {
                    for &u2 in &spec.u2_levels {
                        costs.push(spec.running_cost_at(d1, d2, &x, u1, u2)?);
                        spec.dynamics_into(d1, d2, &x, u1, u2, &mut f)?;
                        for d in 0..n {
                            feet.push(sx[d] + dt * f[d]);
                        }
                        let last = feet.len() - n;
                        grid.clamp(&mut feet[last..]);
                    }
                }
                Ok((costs, feet))
            })
            .collect::<Result<_, ExprError>>()?;
        let mut running = Vec::with_capacity(spec.pairs() * points * controls);
        let mut feet = Vec::with_capacity(spec.pairs() * points * controls * n);
        for (c, f) in rows {
            running.extend(c);
            feet.extend(f);
        }

        let mut jumps = Vec::with_capacity(points * spec.impulses.len() * n);
        for idx in 0..points {
            let x = grid.point(idx);
            for j in 0..spec.impulses.len() {
                let mut y = jump_target(spec, &x, j);
                grid.clamp(&mut y);
                jumps.extend(y);
            }
        }

        let decay = (-spec.discount * dt).exp();
        Ok(Self {
            spec,
            grid,
            dt,
            decay,
            weight: -(-spec.discount * dt).exp_m1() / spec.discount,
            semigroup,
            controls,
            running,
            feet,
            jumps,
        })
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    pub fn grid(&self) -> &'a GridSpec {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `e^{-lambda dt}`.
    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Quadrature weight `(1 - e^{-lambda dt}) / lambda`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn semigroup(&self) -> &DMatrix<f64> {
        &self.semigroup
    }

    /// Largest tabulated running cost.
    pub fn running_cost_sup(&self) -> f64 {
        self.running.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn zero_field(&self) -> ValueField {
        ValueField::constant(self.spec.m1(), self.spec.m2(), self.grid.len(), 0.0)
    }

    /// Continuation value at grid point `idx` and its saddle control indices.
    #[inline]
    pub fn continuation(&self, v: &ValueField, d1: usize, d2: usize, idx: usize, variant: HamiltonianVariant) -> (f64, usize, usize) {
        let n = self.spec.dimension;
        let base = (self.spec.pair(d1, d2) * self.grid.len() + idx) * self.controls;
        let n2 = self.spec.u2_levels.len();
        let slice = v.slice(d1, d2);
        saddle(self.spec.u1_levels.len(), n2, variant, |i1, i2| {
            let c = base + i1 * n2 + i2;
            let foot = &self.feet[c * n..(c + 1) * n];
            self.weight * self.running[c] + self.decay * self.grid.interpolate(slice, foot)
        })
    }

    pub fn lower_obstacle(&self, v: &ValueField, d1: usize, d2: usize, idx: usize) -> f64 {
        switch_obstacle_lower(self.spec, v, idx, d1, d2)
    }

    pub fn upper_obstacle(&self, v: &ValueField, d1: usize, d2: usize, idx: usize) -> f64 {
        switch_obstacle_upper(self.spec, v, idx, d1, d2)
    }

    /// `N[V]` at grid point `idx` with the minimizing impulse.
    pub fn impulse_obstacle(&self, v: &ValueField, d1: usize, d2: usize, idx: usize) -> (f64, Option<usize>) {
        let n = self.spec.dimension;
        let count = self.spec.impulses.len();
        let slice = v.slice(d1, d2);
        impulse_obstacle_with(self.spec, |j| {
            let o = (idx * count + j) * n;
            self.grid.interpolate(slice, &self.jumps[o..o + n])
        })
    }

    /// Clamped post-jump state of grid point `idx`.
    pub fn jump_target_point(&self, idx: usize, impulse: usize) -> Vec<f64> {
        let n = self.spec.dimension;
        let o = (idx * self.spec.impulses.len() + impulse) * n;
        self.jumps[o..o + n].to_vec()
    }

    #[inline]
    fn update_point(&self, v: &ValueField, d1: usize, d2: usize, idx: usize, variant: HamiltonianVariant) -> f64 {
        let (cont, _, _) = self.continuation(v, d1, d2, idx, variant);
        let lower = self.lower_obstacle(v, d1, d2, idx);
        let (imp, _) = self.impulse_obstacle(v, d1, d2, idx);
        let upper = self.upper_obstacle(v, d1, d2, idx);
        upper.max(lower.min(imp).min(cont))
    }

    /// One application of `T`. Reads only `v` (Jacobi sweep).
    pub fn bellman_update(&self, v: &ValueField, variant: HamiltonianVariant) -> ValueField {
        let mut out = self.zero_field();
        self.bellman_update_into(v, variant, &mut out);
        out
    }

    pub fn bellman_update_into(&self, v: &ValueField, variant: HamiltonianVariant, out: &mut ValueField) {
        let points = self.grid.len();
        let m2 = self.spec.m2();
        out.as_mut_slice().par_iter_mut().enumerate().for_each(|(j, slot)| {
            let (pair, idx) = (j / points, j % points);
            *slot = self.update_point(v, pair / m2, pair % m2, idx, variant);
        });
    }

    /// Residuals of `v` against the quasi-variational system. Gradients are
    /// central differences inside the box and one-sided on its faces.
    pub fn sqvi_residual(&self, v: &ValueField, variant: HamiltonianVariant) -> Result<ResidualField, ExprError> {
        let spec = self.spec;
        let grid = self.grid;
        let points = grid.len();
        let n = spec.dimension;
        let m2 = spec.m2();
        let a = spec.generator_matrix();
        let next = self.bellman_update(v, variant);

        let rows: Vec<[f64; 7]> = (0..spec.pairs() * points)
            .into_par_iter()
            .map(|j| {
                let (pair, idx) = (j / points, j % points);
                let (d1, d2) = (pair / m2, pair % m2);
                let slice = v.slice(d1, d2);
                let x = grid.point(idx);
                let mut grad = vec![0.0; n];
                for (d, g) in grad.iter_mut().enumerate() {
                    let i = grid.axis_index(idx, d);
                    let s = grid.stride(d);
                    let h = grid.step()[d];
                    *g = if i == 0 {
                        (slice[idx + s] - slice[idx]) / h
                    } else if i + 1 == grid.counts()[d] {
                        (slice[idx] - slice[idx - s]) / h
                    } else {
                        (slice[idx + s] - slice[idx - s]) / (2.0 * h)
                    };
                }
                let ax = &a * DVector::from_column_slice(&x);
                let transport: f64 = (0..n).map(|d| ax[d] * grad[d]).sum();
                let value = slice[idx];
                let pde = spec.discount * value + transport + hamiltonian(spec, variant, d1, d2, &x, &grad)?;
                let lower = self.lower_obstacle(v, d1, d2, idx);
                let upper = self.upper_obstacle(v, d1, d2, idx);
                let (imp, _) = self.impulse_obstacle(v, d1, d2, idx);
                let hji1 = pde.max(value - lower).max(value - imp).min(value - upper);
                let hji2 = pde.min(value - upper).max(value - lower).max(value - imp);
                Ok([pde, value - upper, lower - value, imp - value, hji1, hji2, (next.as_slice()[j] - value).abs()])
            })
            .collect::<Result<_, ExprError>>()?;
        let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
        Ok(ResidualField {
            points,
            interior: (0..points).map(|i| grid.is_interior(i)).collect(),
            pde: column(0),
            upper_gap: column(1),
            lower_gap: column(2),
            impulse_gap: column(3),
            hji1: column(4),
            hji2: column(5),
            fixed_point: column(6),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn one_d(f: &str, k: &str, u1: &str, u2: &str, discount: f64) -> ProblemSpec {
        let text = format!(
            r#"
[problem]
dimension = 1
discount = {discount:?}
generator = [[0.0]]
box = [[-1.0, 1.0]]
u1_levels = {u1}
u2_levels = {u2}
d1_labels = ["a"]
d2_labels = ["b"]

[dynamics."a,b"]
f = ["{f}"]

[cost."a,b"]
k = "{k}"
"#
        );
        parse_config(&text).unwrap().spec
    }

    /// Brute force over the full control table, written without `saddle`.
    fn brute_h(spec: &ProblemSpec, plus: bool, x: f64, p: f64) -> f64 {
        let g = |u1: f64, u2: f64| {
            let mut f = [0.0];
            spec.dynamics_into(0, 0, &[x], u1, u2, &mut f).unwrap();
            -p * f[0] - spec.running_cost_at(0, 0, &[x], u1, u2).unwrap()
        };
        if plus {
            spec.u1_levels
                .iter()
                .map(|&a| spec.u2_levels.iter().map(|&b| g(a, b)).fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min)
        } else {
            spec.u2_levels
                .iter()
                .map(|&b| spec.u1_levels.iter().map(|&a| g(a, b)).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let s = one_d("u1 + u2", "0", "[-1.0, 1.0]", "[-1.0, 1.0]", 1.0);
        assert_eq!(hamiltonian(&s, HamiltonianVariant::Plus, 0, 0, &[0.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(hamiltonian(&s, HamiltonianVariant::Minus, 0, 0, &[0.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(hamiltonian(&s, HamiltonianVariant::Plus, 0, 0, &[0.3], &[0.0]).unwrap(), 0.0);

        let s = one_d("u1*u2", "0", "[-1.0, 1.0]", "[-1.0, 1.0]", 1.0);
        assert_eq!(brute_h(&s, true, 0.0, 1.0), 1.0);
        assert_eq!(brute_h(&s, false, 0.0, 1.0), -1.0);
        assert_eq!(hamiltonian(&s, HamiltonianVariant::Plus, 0, 0, &[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(hamiltonian(&s, HamiltonianVariant::Minus, 0, 0, &[0.0], &[1.0]).unwrap(), -1.0);
    }

    #[test]
    fn hamiltonian_matches_brute_force() {
        let s = one_d("sin(3*x0*u1) - u2*x0 + u1*u2", "x0^2 + 0.3*u1 - 0.2*u2 + 1", "[-1.0, 0.0, 0.5, 1.0]", "[-1.0, -0.3, 1.0]", 1.0);
        for &x in &[-0.9, -0.2, 0.4, 1.0] {
            for &p in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
                for (plus, variant) in [(true, HamiltonianVariant::Plus), (false, HamiltonianVariant::Minus)] {
                    let got = hamiltonian(&s, variant, 0, 0, &[x], &[p]).unwrap();
                    assert_eq!(got, brute_h(&s, plus, x, p));
                }
            }
        }
    }

    #[test]
    fn isaacs_gap_examples() {
        let grid = GridSpec::new(&[5], &[(-1.0, 1.0)]).unwrap();
        let sep = one_d("u1 + 2*u2 - x0", "x0^2 + u1^2 + u2", "[-1.0, 1.0]", "[-1.0, 0.0, 1.0]", 1.0);
        assert!(isaacs_gap(&sep, &grid, 16, 3).unwrap() < 1e-12);
        let coupled = one_d("u1*u2", "0", "[-1.0, 1.0]", "[-1.0, 1.0]", 1.0);
        // Costates +-1 are always included; the gap there is 2|p|, so the
        // maximum over the random draws in [-5, 5] is at least 2.
        let gap = isaacs_gap(&coupled, &grid, 0, 3).unwrap();
        assert_eq!(gap, 2.0);
        let single = one_d("x0*u1*u2", "u1 + u2 + 1", "[0.5]", "[0.25]", 1.0);
        assert_eq!(isaacs_gap(&single, &grid, 8, 3).unwrap(), 0.0);
    }

    fn modes(m1: usize, m2: usize) -> ProblemSpec {
        let mut s = one_d("0", "1", "[0.0]", "[0.0]", 1.0);
        s.d1_labels = (0..m1).map(|i| format!("p{i}")).collect();
        s.d2_labels = (0..m2).map(|i| format!("q{i}")).collect();
        s.dynamics = vec![s.dynamics[0].clone(); m1 * m2];
        s.running_cost = vec![s.running_cost[0].clone(); m1 * m2];
        s.switch_cost_1 = vec![vec![0.0; m1]; m1];
        s.switch_cost_2 = vec![vec![0.0; m2]; m2];
        s
    }

    #[test]
    fn lower_obstacle_examples() {
        let mut s = modes(1, 2);
        s.switch_cost_2 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let v = ValueField::from_vec(1, 2, 1, vec![7.0, 0.5]);
        assert_eq!(switch_obstacle_lower(&s, &v, 0, 0, 0), 1.5);

        let s1 = modes(1, 1);
        let v1 = ValueField::constant(1, 1, 1, 3.0);
        assert_eq!(switch_obstacle_lower(&s1, &v1, 0, 0, 0), f64::INFINITY);

        let mut s3 = modes(1, 3);
        s3.switch_cost_2[0] = vec![0.0, 1.0, 0.1];
        let v3 = ValueField::from_vec(1, 3, 1, vec![9.0, 0.5, 2.0]);
        assert_eq!(switch_obstacle_lower(&s3, &v3, 0, 0, 0), 1.5);
    }

    #[test]
    fn upper_obstacle_examples() {
        let mut s = modes(2, 1);
        s.switch_cost_1 = vec![vec![0.0, 0.3], vec![0.3, 0.0]];
        let v = ValueField::from_vec(2, 1, 1, vec![-4.0, 1.0]);
        assert_eq!(switch_obstacle_upper(&s, &v, 0, 0, 0), 0.7);

        let s1 = modes(1, 1);
        assert_eq!(switch_obstacle_upper(&s1, &ValueField::constant(1, 1, 1, 3.0), 0, 0, 0), f64::NEG_INFINITY);

        let mut s3 = modes(3, 1);
        s3.switch_cost_1[0] = vec![0.0, 0.3, 0.1];
        let v3 = ValueField::from_vec(3, 1, 1, vec![5.0, 1.0, 0.2]);
        assert!((switch_obstacle_upper(&s3, &v3, 0, 0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn impulse_obstacle_examples() {
        let mut s = one_d("0", "1", "[0.0]", "[0.0]", 1.0);
        s.bounds = vec![(-2.0, 2.0)];
        let grid = GridSpec::new(&[9], &s.bounds).unwrap();
        let v = ValueField::from_fn(1, 1, 9, |_, _, p| if p == 2 { 2.0 } else if p == 5 { 1.0 } else { 10.0 });
        assert_eq!(impulse_obstacle(&s, &grid, &v, &[0.0], 0, 0), f64::INFINITY);

        s.impulses = vec![
            crate::problem::Impulse { jump: vec![-1.0], cost: 0.4 },
            crate::problem::Impulse { jump: vec![0.5], cost: 0.25 },
        ];
        // x = 0: V(-1) = 2 at node 2, V(0.5) = 1 at node 5.
        assert_eq!(impulse_obstacle(&s, &grid, &v, &[0.0], 0, 0), 1.25);
        // x = 1.8: x + 0.5 leaves the box and is clamped to 2.0 (node 8).
        let near_edge = impulse_obstacle(&s, &grid, &v, &[1.8], 0, 0);
        let clamped = grid.interpolate(v.slice(0, 0), &[2.0]) + 0.25;
        let other = grid.interpolate(v.slice(0, 0), &[0.8]) + 0.4;
        assert_eq!(near_edge, clamped.min(other));
    }

    #[test]
    fn update_constant_cost() {
        let s = one_d("0", "1", "[0.0]", "[0.0]", 0.5);
        let grid = GridSpec::new(&[11], &s.bounds).unwrap();
        let scheme = SemiLagrangian::new(&s, &grid, 0.1).unwrap();
        let out = scheme.bellman_update(&scheme.zero_field(), HamiltonianVariant::Plus);
        let w = (1.0 - (-0.05f64).exp()) / 0.5;
        assert!((w - 0.0975412).abs() < 1e-7);
        for &v in out.as_slice() {
            assert!((v - w).abs() < 1e-15);
        }
        let two = ValueField::constant(1, 1, 11, 2.0);
        let out = scheme.bellman_update(&two, HamiltonianVariant::Minus);
        for &v in out.as_slice() {
            assert!((v - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn update_takes_cheap_player_two_switch() {
        // Two player-2 modes with running costs 2 and 0.5, switching cost 1.
        // From V = 0: continue = w * k, M- = 0 + 1. With dt = 1, lambda = 1,
        // w = 1 - e^{-1} ~ 0.632: mode 0 continue = 1.264 > M- = 1.
        let mut s = modes(1, 2);
        s.running_cost = vec![crate::exprlang::parse("2").unwrap(), crate::exprlang::parse("0.5").unwrap()];
        s.switch_cost_2 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let grid = GridSpec::new(&[3], &s.bounds).unwrap();
        let scheme = SemiLagrangian::new(&s, &grid, 1.0).unwrap();
        let out = scheme.bellman_update(&scheme.zero_field(), HamiltonianVariant::Plus);
        let w = 1.0 - (-1.0f64).exp();
        for p in 0..3 {
            assert_eq!(out.get(0, 0, p), 1.0f64.min(2.0 * w));
            assert_eq!(out.get(0, 0, p), 1.0);
            assert!((out.get(0, 1, p) - 0.5 * w).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_examples() {
        let s = one_d("0", "1", "[0.0]", "[0.0]", 0.5);
        let grid = GridSpec::new(&[11], &s.bounds).unwrap();
        let scheme = SemiLagrangian::new(&s, &grid, 0.1).unwrap();
        let r = scheme.sqvi_residual(&scheme.zero_field(), HamiltonianVariant::Plus).unwrap();
        for idx in (0..11).filter(|&i| grid.is_interior(i)) {
            assert_eq!(r.pde[idx], -1.0);
            assert_eq!(r.upper_gap[idx], f64::INFINITY);
            assert_eq!(r.hji1[idx], -1.0);
        }
    }

    #[test]
    fn residual_zero_where_upper_obstacle_binds() {
        // c1 = 1 and V^{1} = V^{0} + 1 give V^{0} = M+ exactly; a free null
        // impulse gives V^{0} = N as well, so the HJI1 form is zero for
        // either sign of the PDE term.
        let mut s = modes(2, 1);
        s.switch_cost_1 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        s.impulses = vec![crate::problem::Impulse { jump: vec![0.0], cost: 0.0 }];
        let grid = GridSpec::new(&[5], &s.bounds).unwrap();
        let scheme = SemiLagrangian::new(&s, &grid, 0.1).unwrap();
        for base in [0.0, 10.0] {
            let v = ValueField::from_fn(2, 1, 5, |d1, _, _| base + d1 as f64);
            let r = scheme.sqvi_residual(&v, HamiltonianVariant::Plus).unwrap();
            assert_eq!(r.upper_gap[2], 0.0);
            assert_eq!(r.hji1[2], 0.0, "pde = {}", r.pde[2]);
        }
    }
}
