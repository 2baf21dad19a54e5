//! Policies: Markov grid policies, finite-memory history-dependent policies, and
//! arbitrary callback policies.
//!
//! Markov and finite-memory decisions are piecewise constant in time on a uniform
//! [`TimeGrid`]: the value on `[k h, (k+1) h)` is stored in cell `k`, and the last cell
//! extends to `+∞`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_distribution, ActionId, CostStructure, InstantCost, ModelBuilder, ModelError,
    ModelSpec, RelaxedAction, StateId, WEIGHT_SUM_TOL,
};
use crate::num::{abs, ceil, floor, integer_ratio};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("UNSUPPORTED_ACTION: decision at state {state} is not a relaxed action on A({state}): {detail}")]
    UnsupportedAction { state: String, detail: String },
    #[error("GRID_MISMATCH: {0}")]
    GridMismatch(String),
    #[error("BAD_GRID: {0}")]
    BadGrid(String),
    #[error("BAD_MEMORY: {0}")]
    BadMemory(String),
    #[error("DIMENSION: expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PolicyError {
    pub fn code(&self) -> &'static str {
        match self {
            PolicyError::UnsupportedAction { .. } => "UNSUPPORTED_ACTION",
            PolicyError::GridMismatch(_) => "GRID_MISMATCH",
            PolicyError::BadGrid(_) => "BAD_GRID",
            PolicyError::BadMemory(_) => "BAD_MEMORY",
            PolicyError::Dimension { .. } => "DIMENSION",
            PolicyError::Model(e) => e.code(),
        }
    }
}

/// Uniform grid `0, h, 2h, …, K h` with `K` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub cells: usize,
}

impl TimeGrid {
    pub fn new(step: f64, cells: usize) -> Result<Self, PolicyError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(PolicyError::BadGrid(format!("step {step}")));
        }
        if cells == 0 {
            return Err(PolicyError::BadGrid("zero cells".into()));
        }
        Ok(TimeGrid { step, cells })
    }

    /// Smallest grid with the given step reaching `horizon`.
    pub fn covering(step: f64, horizon: f64) -> Result<Self, PolicyError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PolicyError::BadGrid(format!("horizon {horizon}")));
        }
        let cells = ceil(horizon / step - 1e-9).max(1.0) as usize;
        TimeGrid::new(step, cells)
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.cells)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn points(&self) -> usize {
        self.cells + 1
    }

    /// Cell containing `t`, with the last cell extended to infinity.
    #[inline]
    pub fn cell_of(&self, t: f64) -> usize {
        if !(t > 0.0) {
            return 0;
        }
        let x = t / self.step;
        let mut k = floor(x);
        if x - k > 1.0 - 1e-9 {
            k += 1.0;
        }
        (k as usize).min(self.cells - 1)
    }

    /// Grid index of `t` if `t` is a grid point.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.step;
        let k = libm::round(x);
        if k >= 0.0 && abs(x - k) <= 1e-9 * k.max(1.0) && (k as usize) <= self.cells {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Grid with the step divided by `factor` and the same horizon.
    pub fn refine(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            step: self.step / factor as f64,
            cells: self.cells * factor,
        }
    }

    /// Whether every interior breakpoint of `self` is a point of a grid with step `step`.
    pub fn breakpoints_on(&self, step: f64) -> bool {
        self.cells <= 1 || integer_ratio(self.step, step).is_some()
    }
}

/// Markov policy `φ(·|z,t)`: one relaxed action per grid cell and state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicyGrid {
    grid: TimeGrid,
    n_states: usize,
    n_actions: usize,
    /// `weights[((k * n_states) + z) * n_actions + a]`.
    weights: Vec<f64>,
}

impl MarkovPolicyGrid {
    /// `table[k * n_states + z]` is the relaxed action at state `z` in cell `k`.
    pub fn new(
        model: &ModelSpec,
        grid: TimeGrid,
        table: Vec<RelaxedAction>,
    ) -> Result<Self, PolicyError> {
        let weights = table.into_iter().flat_map(|p| p.into_weights()).collect();
        Self::from_weights(model, grid, weights)
    }

    /// Flat weights `[((k * n_states) + z) * n_actions + a]`.
    pub fn from_weights(
        model: &ModelSpec,
        grid: TimeGrid,
        weights: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        let (ns, na) = (model.n_states(), model.n_actions());
        let expected = grid.cells * ns * na;
        if weights.len() != expected {
            return Err(PolicyError::Dimension {
                expected,
                got: weights.len(),
            });
        }
        for (i, p) in weights.chunks(na).enumerate() {
            check_decision(model, i % ns, p)?;
        }
        Ok(MarkovPolicyGrid {
            grid,
            n_states: ns,
            n_actions: na,
            weights,
        })
    }

    /// Time-homogeneous policy.
    pub fn constant(model: &ModelSpec, per_state: &[RelaxedAction]) -> Result<Self, PolicyError> {
        Self::new(model, TimeGrid { step: 1.0, cells: 1 }, per_state.to_vec())
    }

    /// Time-homogeneous deterministic policy.
    pub fn deterministic(model: &ModelSpec, actions: &[ActionId]) -> Result<Self, PolicyError> {
        let na = model.n_actions();
        let table: Vec<_> = actions.iter().map(|&a| RelaxedAction::dirac(na, a)).collect();
        Self::constant(model, &table)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn cell_action(&self, k: usize, z: StateId) -> &[f64] {
        let i = (k * self.n_states + z) * self.n_actions;
        &self.weights[i..i + self.n_actions]
    }

    /// `φ(·|z,t)`.
    #[inline]
    pub fn action(&self, z: StateId, t: f64) -> &[f64] {
        self.cell_action(self.grid.cell_of(t), z)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_time_homogeneous(&self) -> bool {
        let block = self.n_states * self.n_actions;
        self.weights
            .chunks(block)
            .all(|c| c == &self.weights[..block])
    }
}

fn check_decision(model: &ModelSpec, z: StateId, p: &[f64]) -> Result<(), PolicyError> {
    let unsupported = |detail: String| PolicyError::UnsupportedAction {
        state: model.state_name(z).into(),
        detail,
    };
    let mut sum = 0.0;
    for (a, &w) in p.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(unsupported(format!("weight {w}")));
        }
        if w > 0.0 && !model.is_feasible(z, a) {
            return Err(unsupported(format!("mass on {}", model.action_name(a))));
        }
        sum += w;
    }
    if abs(sum - 1.0) > WEIGHT_SUM_TOL {
        return Err(unsupported(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// A jump `(t_n, x_n)` of a sample path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub state: StateId,
}

/// Observed history `(x_0, t_1, x_1, …, t_n, x_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial: StateId,
    pub jumps: Vec<Jump>,
}

impl History {
    pub fn new(initial: StateId) -> Self {
        History {
            initial,
            jumps: Vec::new(),
        }
    }

    pub fn current_state(&self) -> StateId {
        self.jumps.last().map_or(self.initial, |j| j.state)
    }

    pub fn last_jump_time(&self) -> f64 {
        self.jumps.last().map_or(0.0, |j| j.time)
    }

    /// Number of jumps at times strictly before `t`.
    pub fn jumps_before(&self, t: f64) -> usize {
        self.jumps.partition_point(|j| j.time < t)
    }

    /// Left limit `ξ_{t-}`.
    pub fn state_before(&self, t: f64) -> StateId {
        match self.jumps_before(t) {
            0 => self.initial,
            n => self.jumps[n - 1].state,
        }
    }

    /// The history observed strictly before `t`.
    pub fn truncated_before(&self, t: f64) -> History {
        History {
            initial: self.initial,
            jumps: self.jumps[..self.jumps_before(t)].to_vec(),
        }
    }

    /// `(from, to)` pairs of the jumps.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, StateId, f64)> + '_ {
        let mut prev = self.initial;
        self.jumps.iter().map(move |j| {
            let from = prev;
            prev = j.state;
            (from, j.state, j.time)
        })
    }
}

/// History-dependent policy whose dependence on the past goes through a finite memory
/// updated at every jump: `m' = update(m, from, to)`; the decision is a relaxed action
/// per (grid cell, state, memory).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMemoryPolicy {
    memory_names: Vec<String>,
    initial: usize,
    n_states: usize,
    n_actions: usize,
    /// `update[(m * n_states + from) * n_states + to]`.
    update: Vec<usize>,
    grid: TimeGrid,
    /// `decision[(((k * n_states) + z) * n_memory + m) * n_actions + a]`.
    decision: Vec<f64>,
}

impl FiniteMemoryPolicy {
    /// `update[(m * n_states + from) * n_states + to]`,
    /// `decision[(k * n_states + z) * n_memory + m]`.
    pub fn new(
        model: &ModelSpec,
        memory_names: Vec<String>,
        initial: usize,
        update: Vec<usize>,
        grid: TimeGrid,
        decision: Vec<RelaxedAction>,
    ) -> Result<Self, PolicyError> {
        let (ns, na, nm) = (model.n_states(), model.n_actions(), memory_names.len());
        if nm == 0 || initial >= nm {
            return Err(PolicyError::BadMemory(format!(
                "initial memory {initial} of {nm} states"
            )));
        }
        if update.len() != nm * ns * ns {
            return Err(PolicyError::Dimension {
                expected: nm * ns * ns,
                got: update.len(),
            });
        }
        if let Some(&bad) = update.iter().find(|&&m| m >= nm) {
            return Err(PolicyError::BadMemory(format!("update to memory {bad}")));
        }
        if decision.len() != grid.cells * ns * nm {
            return Err(PolicyError::Dimension {
                expected: grid.cells * ns * nm,
                got: decision.len(),
            });
        }
        let mut flat = Vec::with_capacity(decision.len() * na);
        for (i, p) in decision.into_iter().enumerate() {
            let z = (i / nm) % ns;
            check_decision(model, z, &p)?;
            flat.extend_from_slice(&p);
        }
        Ok(FiniteMemoryPolicy {
            memory_names,
            initial,
            n_states: ns,
            n_actions: na,
            update,
            grid,
            decision: flat,
        })
    }

    /// Builds the tables from closures.
    pub fn from_fn(
        model: &ModelSpec,
        memory_names: Vec<String>,
        initial: usize,
        grid: TimeGrid,
        update: impl Fn(usize, StateId, StateId) -> usize,
        decide: impl Fn(usize, StateId, usize) -> RelaxedAction,
    ) -> Result<Self, PolicyError> {
        let (ns, nm) = (model.n_states(), memory_names.len());
        let mut table = Vec::with_capacity(nm * ns * ns);
        for m in 0..nm {
            for from in 0..ns {
                for to in 0..ns {
                    table.push(update(m, from, to));
                }
            }
        }
        let mut decision = Vec::with_capacity(grid.cells * ns * nm);
        for k in 0..grid.cells {
            for z in 0..ns {
                for m in 0..nm {
                    decision.push(decide(k, z, m));
                }
            }
        }
        Self::new(model, memory_names, initial, table, grid, decision)
    }

    /// A Markov policy seen as a finite-memory policy with a single memory state.
    pub fn memoryless(model: &ModelSpec, policy: &MarkovPolicyGrid) -> Result<Self, PolicyError> {
        let na = model.n_actions();
        Self::from_fn(
            model,
            vec![String::from("-")],
            0,
            policy.grid(),
            |_, _, _| 0,
            |k, z, _| {
                RelaxedAction::new(policy.cell_action(k, z).to_vec())
                    .unwrap_or_else(|_| RelaxedAction::dirac(na, model.feasible(z)[0]))
            },
        )
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_memory(&self) -> usize {
        self.memory_names.len()
    }

    pub fn memory_names(&self) -> &[String] {
        &self.memory_names
    }

    pub fn initial_memory(&self) -> usize {
        self.initial
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn update(&self, m: usize, from: StateId, to: StateId) -> usize {
        self.update[(m * self.n_states + from) * self.n_states + to]
    }

    pub fn update_table(&self) -> &[usize] {
        &self.update
    }

    #[inline]
    pub fn cell_decision(&self, k: usize, z: StateId, m: usize) -> &[f64] {
        let i = ((k * self.n_states + z) * self.n_memory() + m) * self.n_actions;
        &self.decision[i..i + self.n_actions]
    }

    #[inline]
    pub fn decision(&self, z: StateId, m: usize, t: f64) -> &[f64] {
        self.cell_decision(self.grid.cell_of(t), z, m)
    }

    /// Memory after observing all jumps of `history` strictly before `t`.
    pub fn memory_before(&self, history: &History, t: f64) -> usize {
        history
            .transitions()
            .take_while(|&(_, _, time)| time < t)
            .fold(self.initial, |m, (from, to, _)| self.update(m, from, to))
    }
}

/// An arbitrary history-dependent policy `π^n(·|x_0, t_1, …, x_n, t)`.
///
/// Implementations must be pure: the simulator calls them from concurrent workers.
pub trait GeneralPolicy: Send + Sync {
    fn decide(&self, history: &History, t: f64) -> RelaxedAction;
}

/// Any of the supported policy classes.
#[derive(Clone)]
pub enum Policy {
    Markov(MarkovPolicyGrid),
    FiniteMemory(FiniteMemoryPolicy),
    General(Arc<dyn GeneralPolicy>),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Markov(p) => f.debug_tuple("Markov").field(p).finish(),
            Policy::FiniteMemory(p) => f.debug_tuple("FiniteMemory").field(p).finish(),
            Policy::General(_) => f.write_str("General(..)"),
        }
    }
}

impl From<MarkovPolicyGrid> for Policy {
    fn from(p: MarkovPolicyGrid) -> Self {
        Policy::Markov(p)
    }
}

impl From<FiniteMemoryPolicy> for Policy {
    fn from(p: FiniteMemoryPolicy) -> Self {
        Policy::FiniteMemory(p)
    }
}

impl Policy {
    /// Checks table dimensions against the model. Callback policies are checked at
    /// every call instead.
    pub fn check_model(&self, model: &ModelSpec) -> Result<(), PolicyError> {
        let dims = match self {
            Policy::Markov(p) => Some((p.n_states(), p.n_actions())),
            Policy::FiniteMemory(p) => Some((p.n_states(), p.n_actions())),
            Policy::General(_) => None,
        };
        match dims {
            Some((ns, na)) if ns != model.n_states() || na != model.n_actions() => {
                Err(PolicyError::Dimension {
                    expected: model.n_states() * model.n_actions(),
                    got: ns * na,
                })
            }
            _ => Ok(()),
        }
    }
}

/// The relaxed action the policy applies at time `t` after observing `history`
/// (jumps at or after `t` are ignored).
pub fn decision_at(
    model: &ModelSpec,
    policy: &Policy,
    history: &History,
    t: f64,
) -> Result<RelaxedAction, PolicyError> {
    let z = history.state_before(t);
    let p = match policy {
        Policy::Markov(p) => p.action(z, t).to_vec(),
        Policy::FiniteMemory(p) => p.decision(z, p.memory_before(history, t), t).to_vec(),
        Policy::General(p) => p.decide(&history.truncated_before(t), t).into_weights(),
    };
    check_decision(model, z, &p)?;
    Ok(RelaxedAction::normalized(p)?)
}

/// Deterministic selector used wherever a conditional action distribution is undefined:
/// the lowest-indexed feasible action.
pub fn fallback_action(model: &ModelSpec, z: StateId) -> ActionId {
    model.feasible(z)[0]
}

/// A finite-memory policy turned into a Markov policy on the product chain `X × M`.
#[derive(Debug, Clone)]
pub struct Augmentation {
    pub model: ModelSpec,
    pub policy: MarkovPolicyGrid,
    pub n_base_states: usize,
    pub n_memory: usize,
}

impl Augmentation {
    /// Index of the product state `(z, m)`.
    #[inline]
    pub fn index(&self, z: StateId, m: usize) -> StateId {
        m * self.n_base_states + z
    }

    /// `(z, m)` of a product state.
    #[inline]
    pub fn split(&self, i: StateId) -> (StateId, usize) {
        (i % self.n_base_states, i / self.n_base_states)
    }

    /// `γ` placed on `(z, m_0)`.
    pub fn lift_distribution(&self, gamma: &[f64], initial_memory: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.model.n_states()];
        for (z, &g) in gamma.iter().enumerate() {
            out[self.index(z, initial_memory)] = g;
        }
        out
    }
}

/// Builds the product chain on `X × M`: from `(z, m)` under `a` the chain moves to
/// `(y, update(m, z, y))` at rate `q(z, a, {y})`; the decision table becomes a Markov
/// policy on the product states.
pub fn augment(model: &ModelSpec, policy: &FiniteMemoryPolicy) -> Result<Augmentation, PolicyError> {
    let (ns, na, nm) = (model.n_states(), model.n_actions(), policy.n_memory());
    if policy.n_states() != ns || policy.n_actions() != na {
        return Err(PolicyError::Dimension {
            expected: ns * na,
            got: policy.n_states() * policy.n_actions(),
        });
    }
    let idx = |z: StateId, m: usize| m * ns + z;
    let mut names = Vec::with_capacity(ns * nm);
    for m in 0..nm {
        for z in 0..ns {
            names.push(format!("{}|{}", model.state_name(z), policy.memory_names()[m]));
        }
    }
    let mut b = ModelBuilder::new(names, model.action_names().iter().cloned());
    for m in 0..nm {
        for z in 0..ns {
            let i = idx(z, m);
            b.feasible(i, model.feasible(z));
            for &a in model.feasible(z) {
                for &(y, r) in model.targets(z, a) {
                    b.rate(i, a, idx(y, policy.update(m, z, y)), r);
                }
            }
            if model.is_cemetery(z) {
                b.cemetery(i);
            }
        }
    }

    let n = ns * nm;
    let base = model.costs();
    let mut rate = vec![0.0; n * na];
    let mut jump = vec![0.0; n * n];
    for i in 0..n {
        let (z, _) = (i % ns, i / ns);
        for a in 0..na {
            rate[i * na + a] = base.rate(z, a);
        }
        for j in 0..n {
            jump[i * n + j] = base.jump(z, j % ns);
        }
    }
    let instants = base
        .instants()
        .iter()
        .map(|inst| InstantCost {
            time: inst.time,
            values: (0..n)
                .flat_map(|i| (0..na).map(move |a| (i % ns, a)))
                .map(|(z, a)| inst.values[z * na + a])
                .collect(),
        })
        .collect();
    b.costs(CostStructure::from_parts(n, na, rate, instants, jump)?);
    let aug_model = b.build()?;

    let grid = policy.grid();
    let mut weights = Vec::with_capacity(grid.cells * n * na);
    for k in 0..grid.cells {
        for m in 0..nm {
            for z in 0..ns {
                weights.extend_from_slice(policy.cell_decision(k, z, m));
            }
        }
    }
    let aug_policy = MarkovPolicyGrid::from_weights(&aug_model, grid, weights)?;
    Ok(Augmentation {
        model: aug_model,
        policy: aug_policy,
        n_base_states: ns,
        n_memory: nm,
    })
}

/// Checks `gamma` against the model.
pub(crate) fn check_initial(model: &ModelSpec, gamma: &[f64]) -> Result<(), ModelError> {
    validate_distribution(model.n_states(), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn parity_decisions() {
        let m = catalog::figure_two();
        let pi: Policy = catalog::parity_policy(&m).into();
        let (b, c) = (0, 1);
        let mut h = History::new(1);
        assert_eq!(decision_at(&m, &pi, &h, 0.2).unwrap().weight(b), 1.0);
        h.jumps.push(Jump { time: 0.3, state: 0 });
        h.jumps.push(Jump { time: 0.9, state: 1 });
        assert_eq!(decision_at(&m, &pi, &h, 1.0).unwrap().weight(c), 1.0);
        // the jump at 0.9 is not yet observed at 0.9
        assert_eq!(decision_at(&m, &pi, &h, 0.9).unwrap().weight(b), 1.0);
        h.jumps.push(Jump { time: 1.4, state: 0 });
        h.jumps.push(Jump { time: 1.6, state: 1 });
        assert_eq!(decision_at(&m, &pi, &h, 2.0).unwrap().weight(b), 1.0);
    }

    #[test]
    fn markov_decision_is_deterministic() {
        let m = catalog::figure_two();
        let phi = Policy::Markov(MarkovPolicyGrid::deterministic(&m, &[0, 1]).unwrap());
        let h = History::new(1);
        assert_eq!(
            decision_at(&m, &phi, &h, 0.7).unwrap(),
            decision_at(&m, &phi, &h, 0.7).unwrap()
        );
    }

    #[test]
    fn unsupported_decisions_are_rejected() {
        let m = catalog::figure_two();
        let err = MarkovPolicyGrid::deterministic(&m, &[1, 1]).unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_ACTION");

        struct Bad;
        impl GeneralPolicy for Bad {
            fn decide(&self, _: &History, _: f64) -> RelaxedAction {
                RelaxedAction::dirac(2, 1)
            }
        }
        let pi = Policy::General(Arc::new(Bad));
        let err = decision_at(&m, &pi, &History::new(0), 0.5).unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_ACTION");
    }

    #[test]
    fn fallback_is_lowest_index() {
        let m = catalog::figure_two();
        assert_eq!(fallback_action(&m, 0), 0);
        assert_eq!(fallback_action(&m, 1), 0);
        assert_eq!(fallback_action(&m, 1), fallback_action(&m, 1));
    }

    #[test]
    fn parity_augmentation_is_the_four_cycle() {
        let m = catalog::figure_two();
        let aug = augment(&m, &catalog::parity_policy(&m)).unwrap();
        let am = &aug.model;
        assert_eq!(am.n_states(), 4);
        let (s1, s2) = (0, 1);
        let (even, odd) = (0, 1);
        let e2 = aug.index(s2, even);
        let e1 = aug.index(s1, even);
        let o2 = aug.index(s2, odd);
        let o1 = aug.index(s1, odd);
        assert_eq!([e1, e2, o1, o2], [0, 1, 2, 3]);
        let rate_under_policy = |i: StateId, j: StateId| {
            let p = aug.policy.cell_action(0, i);
            am.mixed_target_rate(i, p, j)
        };
        assert_eq!(rate_under_policy(e2, e1), 2.0);
        assert_eq!(rate_under_policy(e1, o2), 2.0);
        assert_eq!(rate_under_policy(o2, o1), 1.0);
        assert_eq!(rate_under_policy(o1, e2), 2.0);
        assert!(crate::model::validate_model(&am.to_raw()).is_ok());
    }

    #[test]
    fn memoryless_augmentation_is_isomorphic() {
        let m = catalog::figure_two();
        let phi = MarkovPolicyGrid::deterministic(&m, &[0, 1]).unwrap();
        let fm = FiniteMemoryPolicy::memoryless(&m, &phi).unwrap();
        let aug = augment(&m, &fm).unwrap();
        assert_eq!(aug.model.n_states(), m.n_states());
        for x in 0..2 {
            for &a in m.feasible(x) {
                assert_eq!(aug.model.rate_row(x, a), m.rate_row(x, a));
            }
        }
        assert_eq!(aug.policy.weights(), phi.weights());
    }

    #[test]
    fn augmentation_preserves_exit_rates() {
        let m = catalog::random_model(7, 4, 3);
        for (_, fm) in catalog::battery_policies(&m, 7) {
            let aug = augment(&m, &fm).unwrap();
            for i in 0..aug.model.n_states() {
                let (z, _) = aug.split(i);
                for &a in m.feasible(z) {
                    let (e, base) = (aug.model.exit_rate(i, a), m.exit_rate(z, a));
                    assert!((e - base).abs() <= 1e-14 * base);
                }
            }
        }
    }

    #[test]
    fn grid_cells() {
        let g = TimeGrid::new(0.1, 10).unwrap();
        assert_eq!(g.cell_of(0.0), 0);
        assert_eq!(g.cell_of(0.3), 3);
        assert_eq!(g.cell_of(3.0 * 0.1), 3);
        assert_eq!(g.cell_of(0.35), 3);
        assert_eq!(g.cell_of(5.0), 9);
        assert_eq!(g.index_of(0.7), Some(7));
        assert_eq!(g.index_of(0.75), None);
        assert!(g.breakpoints_on(0.05));
        assert!(!g.breakpoints_on(0.03));
    }
}
