//! Feedback policies read off a solved value field, trajectory rollouts and
//! the discounted cost functional.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::exprlang::ExprError;
use crate::operators::{
    impulse_obstacle_with, jump_target, saddle, switch_obstacle_lower_with, switch_obstacle_upper_with,
    HamiltonianVariant,
};
use crate::problem::ProblemSpec;
use crate::solver::{semigroup_step, GridSpec, SemigroupError, ValueField};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error("value field shape {got:?} does not match the problem and grid {want:?}")]
    Shape { got: (usize, usize, usize), want: (usize, usize, usize) },
    #[error("second {what} requested at t = {time}; action tolerance is too large")]
    Guard { time: f64, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyDecision {
    Continue { u1: f64, u2: f64 },
    SwitchPlayer1 { to: usize },
    SwitchPlayer2 { to: usize },
    Impulse { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub dt: f64,
    pub action_tol: f64,
    pub variant: HamiltonianVariant,
}

/// Closed-loop policy: obstacle checks in the order impulse, player-2
/// switch, player-1 switch, then the saddle controls of the continuation.
pub struct Policy<'a> {
    spec: &'a ProblemSpec,
    grid: &'a GridSpec,
    field: &'a ValueField,
    params: PolicyParams,
    semigroup: DMatrix<f64>,
    decay: f64,
    weight: f64,
}

impl<'a> Policy<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        grid: &'a GridSpec,
        field: &'a ValueField,
        params: PolicyParams,
    ) -> Result<Self, SimError> {
        let want = (spec.m1(), spec.m2(), grid.len());
        if field.shape() != want {
            return Err(SimError::Shape { got: field.shape(), want });
        }
        let semigroup = semigroup_step(&spec.generator_matrix(), params.dt)?;
        Ok(Self {
            spec,
            grid,
            field,
            params,
            semigroup,
            decay: (-spec.discount * params.dt).exp(),
            weight: -(-spec.discount * params.dt).exp_m1() / spec.discount,
        })
    }

    pub fn params(&self) -> PolicyParams {
        self.params
    }

    pub fn value_at(&self, x: &[f64], d1: usize, d2: usize) -> f64 {
        self.grid.interpolate(self.field.slice(d1, d2), x)
    }

    /// `clamp(S(dt) x + dt f(x, u1, d1, u2, d2))`.
    pub fn advance(&self, x: &[f64], d1: usize, d2: usize, u1: f64, u2: f64) -> Result<Vec<f64>, ExprError> {
        let mut f = vec![0.0; x.len()];
        self.spec.dynamics_into(d1, d2, x, u1, u2, &mut f)?;
        let sx = &self.semigroup * DVector::from_column_slice(x);
        let mut y: Vec<f64> = (0..x.len()).map(|d| sx[d] + self.params.dt * f[d]).collect();
        self.spec.clamp(&mut y);
        Ok(y)
    }

    /// Continuation value and saddle controls at an arbitrary state.
    pub fn continuation(&self, x: &[f64], d1: usize, d2: usize) -> Result<(f64, usize, usize), ExprError> {
        let spec = self.spec;
        let (n1, n2) = (spec.u1_levels.len(), spec.u2_levels.len());
        let slice = self.field.slice(d1, d2);
        let mut table = Vec::with_capacity(n1 * n2);
        for &u1 in &spec.u1_levels {
            for &u2 in &spec.u2_levels {
                let k = spec.running_cost_at(d1, d2, x, u1, u2)?;
                let foot = self.advance(x, d1, d2, u1, u2)?;
                table.push(self.weight * k + self.decay * self.grid.interpolate(slice, &foot));
            }
        }
        Ok(saddle(n1, n2, self.params.variant, |i1, i2| table[i1 * n2 + i2]))
    }

    pub fn decide(&self, x: &[f64], d1: usize, d2: usize) -> Result<PolicyDecision, ExprError> {
        let spec = self.spec;
        let tol = self.params.action_tol;
        let here = self.value_at(x, d1, d2);

        let slice = self.field.slice(d1, d2);
        let (imp, best_imp) = impulse_obstacle_with(spec, |j| self.grid.interpolate(slice, &jump_target(spec, x, j)));
        if let Some(index) = best_imp.filter(|_| imp <= here + tol) {
            return Ok(PolicyDecision::Impulse { index });
        }
        let (lower, best_lower) = switch_obstacle_lower_with(spec, d1, d2, |a, b| self.value_at(x, a, b));
        if let Some(to) = best_lower.filter(|_| lower <= here + tol) {
            return Ok(PolicyDecision::SwitchPlayer2 { to });
        }
        let (upper, best_upper) = switch_obstacle_upper_with(spec, d1, d2, |a, b| self.value_at(x, a, b));
        if let Some(to) = best_upper.filter(|_| upper >= here - tol) {
            return Ok(PolicyDecision::SwitchPlayer1 { to });
        }
        let (_, i1, i2) = self.continuation(x, d1, d2)?;
        Ok(PolicyDecision::Continue { u1: spec.u1_levels[i1], u2: spec.u2_levels[i2] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    /// Index of the sample row the event precedes.
    pub step: usize,
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEvent {
    pub step: usize,
    pub time: f64,
    pub index: usize,
    pub jump: Vec<f64>,
    pub cost: f64,
}

/// Discounted cost split into its four terms; `switching_p1` carries the
/// minus sign of player 1's switching costs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostTerms {
    pub running: f64,
    pub switching_p1: f64,
    pub switching_p2: f64,
    pub impulse: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.running + self.switching_p1 + self.switching_p2 + self.impulse
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<(usize, usize)>,
    pub controls: Vec<(f64, f64)>,
    /// Undiscounted running cost at each sample.
    pub running_costs: Vec<f64>,
    pub switches_p1: Vec<SwitchEvent>,
    pub switches_p2: Vec<SwitchEvent>,
    pub impulses: Vec<ImpulseEvent>,
    /// Accumulated during the rollout.
    pub costs: CostTerms,
}

impl HybridTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Rolls the closed-loop policy forward over `[0, horizon)`.
///
/// Switches and impulses take no time; each player may act at most once per
/// step. A second request within one step is a [`SimError::Guard`].
pub fn simulate(
    policy: &Policy<'_>,
    x0: &[f64],
    d1_0: usize,
    d2_0: usize,
    horizon: f64,
) -> Result<HybridTrajectory, SimError> {
    let spec = policy.spec;
    let dt = policy.params.dt;
    let discount = spec.discount;
    let steps = ((horizon / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut x = x0.to_vec();
    spec.clamp(&mut x);
    let (mut d1, mut d2) = (d1_0, d2_0);
    let mut traj = HybridTrajectory {
        dt,
        times: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        modes: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps),
        running_costs: Vec::with_capacity(steps),
        switches_p1: Vec::new(),
        switches_p2: Vec::new(),
        impulses: Vec::new(),
        costs: CostTerms::default(),
    };
    for step in 0..steps {
        let t = step as f64 * dt;
        let factor = (-discount * t).exp();
        let (mut jumped, mut switched1, mut switched2) = (false, false, false);
        let (u1, u2) = loop {
            match policy.decide(&x, d1, d2)? {
                PolicyDecision::Continue { u1, u2 } => break (u1, u2),
                PolicyDecision::Impulse { index } => {
                    if std::mem::replace(&mut jumped, true) {
                        return Err(SimError::Guard { time: t, what: "impulse" });
                    }
                    let imp = &spec.impulses[index];
                    x = jump_target(spec, &x, index);
                    traj.costs.impulse += factor * imp.cost;
                    traj.impulses.push(ImpulseEvent { step, time: t, index, jump: imp.jump.clone(), cost: imp.cost });
                }
                PolicyDecision::SwitchPlayer2 { to } => {
                    if std::mem::replace(&mut switched2, true) {
                        return Err(SimError::Guard { time: t, what: "player-2 switch" });
                    }
                    let cost = spec.switch_cost_2[d2][to];
                    traj.costs.switching_p2 += factor * cost;
                    traj.switches_p2.push(SwitchEvent { step, time: t, from: d2, to, cost });
                    d2 = to;
                }
                PolicyDecision::SwitchPlayer1 { to } => {
                    if std::mem::replace(&mut switched1, true) {
                        return Err(SimError::Guard { time: t, what: "player-1 switch" });
                    }
                    let cost = spec.switch_cost_1[d1][to];
                    traj.costs.switching_p1 -= factor * cost;
                    traj.switches_p1.push(SwitchEvent { step, time: t, from: d1, to, cost });
                    d1 = to;
                }
            }
        };
        let k = spec.running_cost_at(d1, d2, &x, u1, u2)?;
        traj.costs.running += factor * policy.weight * k;
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.modes.push((d1, d2));
        traj.controls.push((u1, u2));
        traj.running_costs.push(k);
        x = policy.advance(&x, d1, d2, u1, u2)?;
    }
    Ok(traj)
}

/// Recomputes the discounted cost from the recorded samples and events,
/// independently of the accumulators filled during the rollout.
pub fn evaluate_cost(traj: &HybridTrajectory, discount: f64) -> f64 {
    let weight = -(-discount * traj.dt).exp_m1() / discount;
    let disc = |t: f64| (-discount * t).exp();
    let running: f64 = traj.times.iter().zip(&traj.running_costs).map(|(&t, &k)| disc(t) * weight * k).sum();
    let p1: f64 = traj.switches_p1.iter().map(|e| disc(e.time) * e.cost).sum();
    let p2: f64 = traj.switches_p2.iter().map(|e| disc(e.time) * e.cost).sum();
    let imp: f64 = traj.impulses.iter().map(|e| disc(e.time) * e.cost).sum();
    running - p1 + p2 + imp
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGap {
    pub start: Vec<f64>,
    pub d1: usize,
    pub d2: usize,
    pub cost: f64,
    pub value: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub entries: Vec<RolloutGap>,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
}

/// Compares simulated costs with the value field at each start.
pub fn rollout_value_gap(
    policy: &Policy<'_>,
    starts: &[(Vec<f64>, usize, usize)],
    horizon: f64,
) -> Result<GapReport, SimError> {
    let entries = starts
        .par_iter()
        .map(|(x, d1, d2)| {
            let traj = simulate(policy, x, *d1, *d2, horizon)?;
            let cost = evaluate_cost(&traj, policy.spec.discount);
            let mut start = x.clone();
            policy.spec.clamp(&mut start);
            let value = policy.value_at(&start, *d1, *d2);
            let abs_gap = (cost - value).abs();
            Ok(RolloutGap {
                start,
                d1: *d1,
                d2: *d2,
                cost,
                value,
                abs_gap,
                rel_gap: abs_gap / value.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(GapReport {
        max_abs_gap: entries.iter().map(|e| e.abs_gap).fold(0.0, f64::max),
        max_rel_gap: entries.iter().map(|e| e.rel_gap).fold(0.0, f64::max),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_traj(dt: f64) -> HybridTrajectory {
        HybridTrajectory {
            dt,
            times: vec![],
            states: vec![],
            modes: vec![],
            controls: vec![],
            running_costs: vec![],
            switches_p1: vec![],
            switches_p2: vec![],
            impulses: vec![],
            costs: CostTerms::default(),
        }
    }

    #[test]
    fn cost_of_constant_running_cost() {
        let lambda = 0.5;
        let mut traj = empty_traj(0.1);
        for n in 0..2000 {
            traj.times.push(n as f64 * 0.1);
            traj.running_costs.push(1.0);
        }
        let j = evaluate_cost(&traj, lambda);
        assert!((j - 2.0 * (1.0 - (-lambda * 200.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn cost_sign_of_player_one_switch() {
        let mut traj = empty_traj(0.1);
        traj.switches_p1.push(SwitchEvent { step: 0, time: 0.0, from: 0, to: 1, cost: 0.3 });
        assert_eq!(evaluate_cost(&traj, 1.0), -0.3);
    }

    #[test]
    fn cost_of_delayed_impulse() {
        let lambda = 0.7;
        let mut traj = empty_traj(0.1);
        let tau = std::f64::consts::LN_2 / lambda;
        traj.impulses.push(ImpulseEvent { step: 0, time: tau, index: 0, jump: vec![1.0], cost: 1.0 });
        assert!((evaluate_cost(&traj, lambda) - 0.5).abs() < 1e-15);
    }
}
