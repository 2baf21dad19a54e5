//! Model primitives: states, actions, feasible action sets, the rate kernel and costs.
//!
//! Identifiers are mapped to dense indices at validation time. All numerics work on
//! [`StateId`] / [`ActionId`] indices; names are only kept for I/O.
//!
//! A rate row `q(x, a, ·)` is a signed measure: off-diagonal entries are nonnegative
//! intensities, the diagonal entry is minus the exit rate, and the row sums to zero.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::num::abs;

/// Dense state index.
pub type StateId = usize;
/// Dense action index.
pub type ActionId = usize;

/// Tolerance on `Σ_y q(x,a,{y})` for rows read from a file.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Tolerance on the total mass of a relaxed action.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on the total mass of an initial distribution.
pub const DIST_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("ROW_SUM: row of state {state} under action {action} sums to {sum}")]
    RowSum {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("NEG_RATE: rate from {state} to {target} under {action} is {rate}")]
    NegRate {
        state: String,
        action: String,
        target: String,
        rate: f64,
    },
    #[error("EMPTY_ACTIONS: state {0} has no feasible action")]
    EmptyActions(String),
    #[error("UNKNOWN_ID: {0}")]
    UnknownId(String),
    #[error("DUPLICATE_ID: {0}")]
    DuplicateId(String),
    #[error("NON_FINITE: {0}")]
    NonFinite(String),
    #[error("INFEASIBLE_RATE: rates given for action {action} which is not feasible at {state}")]
    InfeasibleRate { state: String, action: String },
    #[error("BAD_SUPPORT: relaxed action puts mass outside A({0})")]
    BadSupport(String),
    #[error("BAD_DIST: distribution has total mass {0}")]
    BadDist(f64),
    #[error("BAD_WEIGHTS: {0}")]
    BadWeights(String),
    #[error("INSTANT_ORDER: instant-cost epochs must be nonnegative and strictly increasing")]
    InstantOrder,
    #[error("CEMETERY: {0}")]
    Cemetery(String),
    #[error("DIMENSION: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

impl ModelError {
    /// Short machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::RowSum { .. } => "ROW_SUM",
            ModelError::NegRate { .. } => "NEG_RATE",
            ModelError::EmptyActions(_) => "EMPTY_ACTIONS",
            ModelError::UnknownId(_) => "UNKNOWN_ID",
            ModelError::DuplicateId(_) => "DUPLICATE_ID",
            ModelError::NonFinite(_) => "NON_FINITE",
            ModelError::InfeasibleRate { .. } => "INFEASIBLE_RATE",
            ModelError::BadSupport(_) => "BAD_SUPPORT",
            ModelError::BadDist(_) => "BAD_DIST",
            ModelError::BadWeights(_) => "BAD_WEIGHTS",
            ModelError::InstantOrder => "INSTANT_ORDER",
            ModelError::Cemetery(_) => "CEMETERY",
            ModelError::Dimension { .. } => "DIMENSION",
        }
    }
}

/// A probability distribution over the model's actions, the unit of relaxed control.
///
/// Stored densely (one weight per model action); the support must lie in the
/// feasible set of the state it is used at, which is checked by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelaxedAction {
    weights: Vec<f64>,
}

impl RelaxedAction {
    /// Point mass on `action`.
    pub fn dirac(n_actions: usize, action: ActionId) -> Self {
        let mut weights = vec![0.0; n_actions];
        weights[action] = 1.0;
        RelaxedAction { weights }
    }

    /// Weights must be finite, nonnegative and sum to one within [`WEIGHT_SUM_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        let sum = check_weights(&weights)?;
        if abs(sum - 1.0) > WEIGHT_SUM_TOL {
            return Err(ModelError::BadWeights(format!("weights sum to {sum}")));
        }
        Ok(RelaxedAction { weights })
    }

    /// Rescales nonnegative weights with positive total mass to sum to one.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self, ModelError> {
        let sum = check_weights(&weights)?;
        if !(sum > 0.0) {
            return Err(ModelError::BadWeights("weights have zero mass".to_string()));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(RelaxedAction { weights })
    }

    /// Equal weights on `actions`.
    pub fn uniform(n_actions: usize, actions: &[ActionId]) -> Self {
        let mut weights = vec![0.0; n_actions];
        let w = 1.0 / actions.len() as f64;
        for &a in actions {
            weights[a] = w;
        }
        RelaxedAction { weights }
    }

    pub fn weight(&self, action: ActionId) -> f64 {
        self.weights[action]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Actions carrying positive weight.
    pub fn support(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(a, _)| a)
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, lambda: f64, other: &RelaxedAction) -> RelaxedAction {
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        RelaxedAction { weights }
    }
}

impl Deref for RelaxedAction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.weights
    }
}

fn check_weights(weights: &[f64]) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(ModelError::BadWeights(format!("invalid weight {w}")));
        }
        sum += w;
    }
    Ok(sum)
}

/// A subset of the state space, as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    members: Vec<bool>,
}

impl StateSet {
    pub fn empty(n_states: usize) -> Self {
        StateSet {
            members: vec![false; n_states],
        }
    }

    pub fn all(n_states: usize) -> Self {
        StateSet {
            members: vec![true; n_states],
        }
    }

    pub fn singleton(n_states: usize, z: StateId) -> Self {
        Self::from_states(n_states, &[z])
    }

    pub fn from_states(n_states: usize, states: &[StateId]) -> Self {
        let mut set = Self::empty(n_states);
        for &z in states {
            set.members[z] = true;
        }
        set
    }

    pub fn from_mask(members: Vec<bool>) -> Self {
        StateSet { members }
    }

    #[inline]
    pub fn contains(&self, z: StateId) -> bool {
        self.members[z]
    }

    pub fn universe_size(&self) -> usize {
        self.members.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(z, _)| z)
    }
}

/// Instant cost `G_i` charged at the fixed epoch `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantCost {
    pub time: f64,
    /// `values[z * n_actions + a]`.
    pub values: Vec<f64>,
}

/// Cost rate `c(z,a)`, instant costs `G_i` at epochs `u_i`, and jump costs `C(x,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostStructure {
    n_states: usize,
    n_actions: usize,
    rate: Vec<f64>,
    instants: Vec<InstantCost>,
    jump: Vec<f64>,
}

impl CostStructure {
    pub fn zero(n_states: usize, n_actions: usize) -> Self {
        CostStructure {
            n_states,
            n_actions,
            rate: vec![0.0; n_states * n_actions],
            instants: Vec::new(),
            jump: vec![0.0; n_states * n_states],
        }
    }

    /// Builds costs from dense tables. `jump` diagonal entries are ignored.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        rate: Vec<f64>,
        instants: Vec<InstantCost>,
        jump: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let sa = n_states * n_actions;
        if rate.len() != sa {
            return Err(ModelError::Dimension {
                expected: sa,
                got: rate.len(),
            });
        }
        if jump.len() != n_states * n_states {
            return Err(ModelError::Dimension {
                expected: n_states * n_states,
                got: jump.len(),
            });
        }
        let mut last = f64::NEG_INFINITY;
        for inst in &instants {
            if inst.values.len() != sa {
                return Err(ModelError::Dimension {
                    expected: sa,
                    got: inst.values.len(),
                });
            }
            if !(inst.time >= 0.0 && inst.time > last && inst.time.is_finite()) {
                return Err(ModelError::InstantOrder);
            }
            last = inst.time;
        }
        let all_finite = rate
            .iter()
            .chain(jump.iter())
            .chain(instants.iter().flat_map(|i| i.values.iter()))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ModelError::NonFinite("cost value".to_string()));
        }
        let mut jump = jump;
        for x in 0..n_states {
            jump[x * n_states + x] = 0.0;
        }
        Ok(CostStructure {
            n_states,
            n_actions,
            rate,
            instants,
            jump,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn rate(&self, z: StateId, a: ActionId) -> f64 {
        self.rate[z * self.n_actions + a]
    }

    pub fn rate_table(&self) -> &[f64] {
        &self.rate
    }

    #[inline]
    pub fn jump(&self, x: StateId, y: StateId) -> f64 {
        self.jump[x * self.n_states + y]
    }

    pub fn jump_table(&self) -> &[f64] {
        &self.jump
    }

    pub fn instants(&self) -> &[InstantCost] {
        &self.instants
    }

    pub fn set_rate(&mut self, z: StateId, a: ActionId, value: f64) {
        self.rate[z * self.n_actions + a] = value;
    }

    pub fn set_jump(&mut self, x: StateId, y: StateId, value: f64) {
        if x != y {
            self.jump[x * self.n_states + y] = value;
        }
    }

    pub fn has_jump_costs(&self) -> bool {
        self.jump.iter().any(|&c| c != 0.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.rate
            .iter()
            .chain(self.jump.iter())
            .chain(self.instants.iter().flat_map(|i| i.values.iter()))
            .all(|&v| v >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.rate
            .iter()
            .chain(self.jump.iter())
            .chain(self.instants.iter().flat_map(|i| i.values.iter()))
            .all(|&v| v == 0.0)
    }

    /// Applies `f` to every entry of every table.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CostStructure {
        CostStructure {
            n_states: self.n_states,
            n_actions: self.n_actions,
            rate: self.rate.iter().map(|&v| f(v)).collect(),
            instants: self
                .instants
                .iter()
                .map(|i| InstantCost {
                    time: i.time,
                    values: i.values.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
            jump: self.jump.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds `extra[z * n_actions + a]` to the cost rate and drops the jump costs.
    pub(crate) fn with_rate_added(&self, extra: &[f64]) -> CostStructure {
        let mut out = self.clone();
        for (r, e) in out.rate.iter_mut().zip(extra) {
            *r += e;
        }
        out.jump.iter_mut().for_each(|c| *c = 0.0);
        out
    }
}

/// A state or action identifier as written in files: a string or an integer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "LabelRepr", into = "String")]
pub struct Label(pub String);

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Text(String),
    Int(i64),
}

impl From<LabelRepr> for Label {
    fn from(r: LabelRepr) -> Self {
        match r {
            LabelRepr::Text(s) => Label(s),
            LabelRepr::Int(i) => Label(i.to_string()),
        }
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.0
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// One rate row as written in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRateRow {
    pub state: Label,
    pub action: Label,
    /// Target state → rate. The diagonal entry is optional; when present the row
    /// must sum to zero.
    pub row: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstantCost {
    pub time: f64,
    /// State → action → value.
    pub values: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Unvalidated model as read from a file. Missing cost entries are zero; feasible
/// `(state, action)` pairs without a rate row are absorbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    pub states: Vec<Label>,
    pub actions: Vec<Label>,
    pub feasible: BTreeMap<String, Vec<Label>>,
    #[serde(default)]
    pub rates: Vec<RawRateRow>,
    /// State → action → cost rate.
    #[serde(default)]
    pub cost_rate: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub instant_costs: Vec<RawInstantCost>,
    /// From-state → to-state → jump cost.
    #[serde(default)]
    pub jump_costs: BTreeMap<String, BTreeMap<String, f64>>,
    /// Absorbing states standing in for the post-explosion state; excluded from
    /// state mass when computing mass defects.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cemetery: Vec<Label>,
}

/// Incremental, index-based construction of a [`ModelSpec`].
///
/// Index arguments out of range panic; value checks happen in [`ModelBuilder::build`].
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    states: Vec<String>,
    actions: Vec<String>,
    feasible: Vec<Vec<ActionId>>,
    off_diag: Vec<f64>,
    diag: Vec<Option<f64>>,
    row_given: Vec<bool>,
    costs: CostStructure,
    cemetery: Vec<bool>,
}

impl ModelBuilder {
    pub fn new<S, A>(states: S, actions: A) -> Self
    where
        S: IntoIterator,
        S::Item: Into<String>,
        A: IntoIterator,
        A::Item: Into<String>,
    {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        let (ns, na) = (states.len(), actions.len());
        ModelBuilder {
            feasible: vec![Vec::new(); ns],
            off_diag: vec![0.0; ns * na * ns],
            diag: vec![None; ns * na],
            row_given: vec![false; ns * na],
            costs: CostStructure::zero(ns, na),
            cemetery: vec![false; ns],
            states,
            actions,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn feasible(&mut self, x: StateId, actions: &[ActionId]) -> &mut Self {
        assert!(x < self.states.len());
        let mut v: Vec<ActionId> = actions.to_vec();
        assert!(v.iter().all(|&a| a < self.actions.len()));
        v.sort_unstable();
        v.dedup();
        self.feasible[x] = v;
        self
    }

    /// Sets `q(x, a, {y})`. For `y == x` this declares the diagonal entry, which is then
    /// checked against the off-diagonal sum.
    pub fn rate(&mut self, x: StateId, a: ActionId, y: StateId, value: f64) -> &mut Self {
        let (ns, na) = (self.states.len(), self.actions.len());
        assert!(x < ns && y < ns && a < na);
        self.row_given[x * na + a] = true;
        if x == y {
            self.diag[x * na + a] = Some(value);
        } else {
            self.off_diag[(x * na + a) * ns + y] = value;
        }
        self
    }

    pub fn cost_rate(&mut self, x: StateId, a: ActionId, value: f64) -> &mut Self {
        self.costs.set_rate(x, a, value);
        self
    }

    pub fn jump_cost(&mut self, x: StateId, y: StateId, value: f64) -> &mut Self {
        self.costs.set_jump(x, y, value);
        self
    }

    /// Appends an instant cost; `values[z * n_actions + a]`.
    pub fn instant_cost(&mut self, time: f64, values: Vec<f64>) -> &mut Self {
        self.costs.instants.push(InstantCost { time, values });
        self
    }

    pub fn costs(&mut self, costs: CostStructure) -> &mut Self {
        self.costs = costs;
        self
    }

    pub fn cemetery(&mut self, x: StateId) -> &mut Self {
        self.cemetery[x] = true;
        self
    }

    pub fn build(&self) -> Result<ModelSpec, ModelError> {
        let (ns, na) = (self.states.len(), self.actions.len());
        check_unique(&self.states)?;
        check_unique(&self.actions)?;

        let mut feasible_mask = vec![false; ns * na];
        for (x, acts) in self.feasible.iter().enumerate() {
            if acts.is_empty() {
                return Err(ModelError::EmptyActions(self.states[x].clone()));
            }
            for &a in acts {
                feasible_mask[x * na + a] = true;
            }
        }

        let mut rates = vec![0.0; ns * na * ns];
        let mut exit = vec![0.0; ns * na];
        let mut targets = vec![Vec::new(); ns * na];
        for x in 0..ns {
            for a in 0..na {
                let sa = x * na + a;
                if !feasible_mask[sa] {
                    if self.row_given[sa] {
                        return Err(ModelError::InfeasibleRate {
                            state: self.states[x].clone(),
                            action: self.actions[a].clone(),
                        });
                    }
                    continue;
                }
                let row = &self.off_diag[sa * ns..(sa + 1) * ns];
                let mut out = 0.0;
                for (y, &r) in row.iter().enumerate() {
                    if y == x {
                        continue;
                    }
                    if !r.is_finite() {
                        return Err(ModelError::NonFinite(format!(
                            "rate {} -> {} under {}",
                            self.states[x], self.states[y], self.actions[a]
                        )));
                    }
                    if r < 0.0 {
                        return Err(ModelError::NegRate {
                            state: self.states[x].clone(),
                            action: self.actions[a].clone(),
                            target: self.states[y].clone(),
                            rate: r,
                        });
                    }
                    if r > 0.0 {
                        targets[sa].push((y, r));
                    }
                    out += r;
                    rates[sa * ns + y] = r;
                }
                if let Some(d) = self.diag[sa] {
                    if !d.is_finite() {
                        return Err(ModelError::NonFinite(format!(
                            "diagonal rate of {} under {}",
                            self.states[x], self.actions[a]
                        )));
                    }
                    let sum = out + d;
                    if abs(sum) > ROW_SUM_TOL {
                        return Err(ModelError::RowSum {
                            state: self.states[x].clone(),
                            action: self.actions[a].clone(),
                            sum,
                        });
                    }
                }
                rates[sa * ns + x] = -out;
                exit[sa] = out;
            }
        }

        let costs = CostStructure::from_parts(
            ns,
            na,
            self.costs.rate.clone(),
            self.costs.instants.clone(),
            self.costs.jump.clone(),
        )?;

        for x in (0..ns).filter(|&x| self.cemetery[x]) {
            let name = &self.states[x];
            if self.feasible[x].iter().any(|&a| exit[x * na + a] != 0.0) {
                return Err(ModelError::Cemetery(format!("{name} is not absorbing")));
            }
            let costly = (0..na).any(|a| costs.rate(x, a) != 0.0)
                || costs
                    .instants
                    .iter()
                    .any(|i| (0..na).any(|a| i.values[x * na + a] != 0.0));
            if costly {
                return Err(ModelError::Cemetery(format!("{name} carries costs")));
            }
        }

        let max_exit = (0..ns)
            .map(|x| {
                self.feasible[x]
                    .iter()
                    .map(|&a| exit[x * na + a])
                    .fold(0.0, f64::max)
            })
            .collect();

        Ok(ModelSpec {
            state_names: self.states.clone(),
            action_names: self.actions.clone(),
            feasible: self.feasible.clone(),
            feasible_mask,
            rates,
            exit,
            max_exit,
            targets,
            costs,
            cemetery: self.cemetery.clone(),
        })
    }
}

fn check_unique(names: &[String]) -> Result<(), ModelError> {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(ModelError::DuplicateId(n.clone()));
        }
    }
    Ok(())
}

/// A validated, immutable model. Cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    state_names: Vec<String>,
    action_names: Vec<String>,
    feasible: Vec<Vec<ActionId>>,
    feasible_mask: Vec<bool>,
    /// `rates[(x * n_actions + a) * n_states + y]`, diagonal = -exit rate.
    rates: Vec<f64>,
    exit: Vec<f64>,
    max_exit: Vec<f64>,
    targets: Vec<Vec<(StateId, f64)>>,
    costs: CostStructure,
    cemetery: Vec<bool>,
}

/// Validates a raw model: identifiers, feasible sets, rate rows and costs.
pub fn validate_model(raw: &RawModel) -> Result<ModelSpec, ModelError> {
    let states: Vec<String> = raw.states.iter().map(|l| l.0.clone()).collect();
    let actions: Vec<String> = raw.actions.iter().map(|l| l.0.clone()).collect();
    check_unique(&states)?;
    check_unique(&actions)?;
    let sid = |name: &str| {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ModelError::UnknownId(format!("state {name}")))
    };
    let aid = |name: &str| {
        actions
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ModelError::UnknownId(format!("action {name}")))
    };
    let na = actions.len();
    let mut b = ModelBuilder::new(states.iter().cloned(), actions.iter().cloned());

    for (state, acts) in &raw.feasible {
        let x = sid(state)?;
        let ids = acts
            .iter()
            .map(|a| aid(&a.0))
            .collect::<Result<Vec<_>, _>>()?;
        b.feasible(x, &ids);
    }
    for row in &raw.rates {
        let x = sid(&row.state.0)?;
        let a = aid(&row.action.0)?;
        if b.row_given[x * na + a] {
            return Err(ModelError::DuplicateId(format!(
                "rate row ({}, {})",
                row.state.0, row.action.0
            )));
        }
        b.row_given[x * na + a] = true;
        for (target, &r) in &row.row {
            b.rate(x, a, sid(target)?, r);
        }
    }
    for (state, per_action) in &raw.cost_rate {
        let x = sid(state)?;
        for (action, &v) in per_action {
            b.cost_rate(x, aid(action)?, v);
        }
    }
    for inst in &raw.instant_costs {
        let mut values = vec![0.0; states.len() * na];
        for (state, per_action) in &inst.values {
            let x = sid(state)?;
            for (action, &v) in per_action {
                values[x * na + aid(action)?] = v;
            }
        }
        b.instant_cost(inst.time, values);
    }
    for (from, per_to) in &raw.jump_costs {
        let x = sid(from)?;
        for (to, &v) in per_to {
            b.jump_cost(x, sid(to)?, v);
        }
    }
    for c in &raw.cemetery {
        b.cemetery(sid(&c.0)?);
    }
    b.build()
}

impl ModelSpec {
    #[inline]
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn state_name(&self, z: StateId) -> &str {
        &self.state_names[z]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|s| s == name)
    }

    /// The feasible actions `A(z)`, ascending.
    pub fn feasible(&self, z: StateId) -> &[ActionId] {
        &self.feasible[z]
    }

    #[inline]
    pub fn is_feasible(&self, z: StateId, a: ActionId) -> bool {
        self.feasible_mask[z * self.n_actions() + a]
    }

    /// `q(x, a, {y})`, including the (negative) diagonal.
    #[inline]
    pub fn rate(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        self.rates[(x * self.n_actions() + a) * self.n_states() + y]
    }

    /// The full signed row `q(x, a, ·)`.
    pub fn rate_row(&self, x: StateId, a: ActionId) -> &[f64] {
        let ns = self.n_states();
        let sa = x * self.n_actions() + a;
        &self.rates[sa * ns..(sa + 1) * ns]
    }

    /// `q(x, a) = q(x, a, X \ {x})`.
    #[inline]
    pub fn exit_rate(&self, x: StateId, a: ActionId) -> f64 {
        self.exit[x * self.n_actions() + a]
    }

    /// Positive off-diagonal entries of `q(x, a, ·)`.
    #[inline]
    pub fn targets(&self, x: StateId, a: ActionId) -> &[(StateId, f64)] {
        &self.targets[x * self.n_actions() + a]
    }

    /// `max_{a ∈ A(z)} q(z, a)`.
    #[inline]
    pub fn max_exit_rate(&self, z: StateId) -> f64 {
        self.max_exit[z]
    }

    /// Largest exit rate over all states.
    pub fn global_max_exit_rate(&self) -> f64 {
        self.max_exit.iter().copied().fold(0.0, f64::max)
    }

    pub fn costs(&self) -> &CostStructure {
        &self.costs
    }

    pub fn is_cemetery(&self, z: StateId) -> bool {
        self.cemetery[z]
    }

    pub fn cemetery_mask(&self) -> &[bool] {
        &self.cemetery
    }

    /// Same dynamics with different costs.
    pub fn with_costs(&self, costs: CostStructure) -> Result<ModelSpec, ModelError> {
        if costs.n_states != self.n_states() || costs.n_actions != self.n_actions() {
            return Err(ModelError::Dimension {
                expected: self.n_states() * self.n_actions(),
                got: costs.n_states * costs.n_actions,
            });
        }
        let mut m = self.clone();
        m.costs = costs;
        Ok(m)
    }

    /// Checks that `weights` is a relaxed action supported on `A(z)`.
    pub fn check_support(&self, z: StateId, weights: &[f64]) -> Result<(), ModelError> {
        if weights.len() != self.n_actions() {
            return Err(ModelError::Dimension {
                expected: self.n_actions(),
                got: weights.len(),
            });
        }
        if weights
            .iter()
            .enumerate()
            .any(|(a, &w)| w > 0.0 && !self.is_feasible(z, a))
        {
            return Err(ModelError::BadSupport(self.state_names[z].clone()));
        }
        Ok(())
    }

    /// `q(z, p, Z) = Σ_a p(a) q(z, a, Z)`; includes the diagonal when `z ∈ Z`.
    pub fn mixed_rate(&self, z: StateId, p: &[f64], set: &StateSet) -> Result<f64, ModelError> {
        self.check_support(z, p)?;
        Ok(self.mixed_rate_unchecked(z, p, set))
    }

    pub(crate) fn mixed_rate_unchecked(&self, z: StateId, p: &[f64], set: &StateSet) -> f64 {
        let mut total = 0.0;
        for &a in self.feasible(z) {
            let w = p[a];
            if w == 0.0 {
                continue;
            }
            let row = self.rate_row(z, a);
            let r: f64 = set.iter().map(|y| row[y]).sum();
            total += w * r;
        }
        total
    }

    /// `q(z, p) = Σ_a p(a) q(z, a)`.
    pub fn mixed_exit_rate(&self, z: StateId, p: &[f64]) -> Result<f64, ModelError> {
        self.check_support(z, p)?;
        Ok(self.mixed_exit_rate_unchecked(z, p))
    }

    #[inline]
    pub(crate) fn mixed_exit_rate_unchecked(&self, z: StateId, p: &[f64]) -> f64 {
        self.feasible(z)
            .iter()
            .map(|&a| p[a] * self.exit_rate(z, a))
            .sum()
    }

    /// Off-diagonal rate `q(z, p, {y})` for `y != z`.
    #[inline]
    pub(crate) fn mixed_target_rate(&self, z: StateId, p: &[f64], y: StateId) -> f64 {
        self.feasible(z)
            .iter()
            .map(|&a| p[a] * self.rate(z, a, y))
            .sum()
    }

    /// Converts back to the file representation (full rows, diagonal included).
    pub fn to_raw(&self) -> RawModel {
        let (ns, na) = (self.n_states(), self.n_actions());
        let label = |s: &String| Label(s.clone());
        let mut feasible = BTreeMap::new();
        let mut rates = Vec::new();
        let mut cost_rate = BTreeMap::new();
        for x in 0..ns {
            feasible.insert(
                self.state_names[x].clone(),
                self.feasible[x].iter().map(|&a| label(&self.action_names[a])).collect(),
            );
            let mut per_action = BTreeMap::new();
            for &a in &self.feasible[x] {
                let row: BTreeMap<String, f64> = (0..ns)
                    .filter(|&y| y == x || self.rate(x, a, y) != 0.0)
                    .map(|y| (self.state_names[y].clone(), self.rate(x, a, y)))
                    .collect();
                rates.push(RawRateRow {
                    state: label(&self.state_names[x]),
                    action: label(&self.action_names[a]),
                    row,
                });
                let c = self.costs.rate(x, a);
                if c != 0.0 {
                    per_action.insert(self.action_names[a].clone(), c);
                }
            }
            if !per_action.is_empty() {
                cost_rate.insert(self.state_names[x].clone(), per_action);
            }
        }
        let instant_costs = self
            .costs
            .instants
            .iter()
            .map(|inst| {
                let mut values = BTreeMap::new();
                for x in 0..ns {
                    let per: BTreeMap<String, f64> = (0..na)
                        .filter(|&a| inst.values[x * na + a] != 0.0)
                        .map(|a| (self.action_names[a].clone(), inst.values[x * na + a]))
                        .collect();
                    if !per.is_empty() {
                        values.insert(self.state_names[x].clone(), per);
                    }
                }
                RawInstantCost {
                    time: inst.time,
                    values,
                }
            })
            .collect();
        let mut jump_costs = BTreeMap::new();
        for x in 0..ns {
            let per: BTreeMap<String, f64> = (0..ns)
                .filter(|&y| self.costs.jump(x, y) != 0.0)
                .map(|y| (self.state_names[y].clone(), self.costs.jump(x, y)))
                .collect();
            if !per.is_empty() {
                jump_costs.insert(self.state_names[x].clone(), per);
            }
        }
        RawModel {
            states: self.state_names.iter().map(label).collect(),
            actions: self.action_names.iter().map(label).collect(),
            feasible,
            rates,
            cost_rate,
            instant_costs,
            jump_costs,
            cemetery: (0..ns)
                .filter(|&x| self.cemetery[x])
                .map(|x| label(&self.state_names[x]))
                .collect(),
        }
    }
}

/// Checks that `gamma` is a probability vector over `n` states.
pub fn validate_distribution(n: usize, gamma: &[f64]) -> Result<(), ModelError> {
    if gamma.len() != n {
        return Err(ModelError::Dimension {
            expected: n,
            got: gamma.len(),
        });
    }
    let mut sum = 0.0;
    for &g in gamma {
        if !g.is_finite() || g < 0.0 {
            return Err(ModelError::BadDist(g));
        }
        sum += g;
    }
    if abs(sum - 1.0) > DIST_SUM_TOL {
        return Err(ModelError::BadDist(sum));
    }
    Ok(())
}

/// Point mass on `z`.
pub fn dirac_distribution(n: usize, z: StateId) -> Vec<f64> {
    let mut g = vec![0.0; n];
    g[z] = 1.0;
    g
}

/// The model extended by an entry state `x'` that, under the entry action `a'`, jumps
/// into `X` with intensity `γ`, and by a freeze action `a''` that is feasible
/// everywhere and makes every state absorbing.
#[derive(Debug, Clone)]
pub struct Extension {
    pub model: ModelSpec,
    pub entry_state: StateId,
    pub entry_action: ActionId,
    pub freeze_action: ActionId,
}

pub fn extend_with_initial_distribution(
    model: &ModelSpec,
    gamma: &[f64],
) -> Result<Extension, ModelError> {
    let (ns, na) = (model.n_states(), model.n_actions());
    validate_distribution(ns, gamma)?;

    let fresh = |base: &str, taken: &[String]| {
        let mut name = String::from(base);
        while taken.contains(&name) {
            name.push('\'');
        }
        name
    };
    let entry_name = fresh("x'", &model.state_names);
    let entry_action_name = fresh("a'", &model.action_names);
    let mut actions_so_far = model.action_names.clone();
    actions_so_far.push(entry_action_name.clone());
    let freeze_name = fresh("a''", &actions_so_far);

    let mut states = model.state_names.clone();
    states.push(entry_name);
    let mut actions = actions_so_far;
    actions.push(freeze_name);
    let (entry, a_entry, a_freeze) = (ns, na, na + 1);

    let mut b = ModelBuilder::new(states, actions);
    for x in 0..ns {
        let mut acts = model.feasible(x).to_vec();
        acts.push(a_freeze);
        b.feasible(x, &acts);
        for &a in model.feasible(x) {
            for &(y, r) in model.targets(x, a) {
                b.rate(x, a, y, r);
            }
        }
        if model.is_cemetery(x) {
            b.cemetery(x);
        }
    }
    b.feasible(entry, &[a_entry, a_freeze]);
    for (y, &g) in gamma.iter().enumerate() {
        if g > 0.0 {
            b.rate(entry, a_entry, y, g);
        }
    }

    let ns2 = ns + 1;
    let na2 = na + 2;
    let mut costs = CostStructure::zero(ns2, na2);
    for x in 0..ns {
        for a in 0..na {
            costs.set_rate(x, a, model.costs.rate(x, a));
        }
        for y in 0..ns {
            costs.set_jump(x, y, model.costs.jump(x, y));
        }
    }
    costs.instants = model
        .costs
        .instants
        .iter()
        .map(|inst| {
            let mut values = vec![0.0; ns2 * na2];
            for x in 0..ns {
                for a in 0..na {
                    values[x * na2 + a] = inst.values[x * na + a];
                }
            }
            InstantCost {
                time: inst.time,
                values,
            }
        })
        .collect();
    b.costs(costs);

    Ok(Extension {
        model: b.build()?,
        entry_state: entry,
        entry_action: a_entry,
        freeze_action: a_freeze,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn figure_two_rates() {
        let m = catalog::figure_two();
        let (s1, s2) = (0, 1);
        let (b, c) = (0, 1);
        assert_eq!(m.max_exit_rate(s1), 2.0);
        assert_eq!(m.max_exit_rate(s2), 2.0);
        assert_eq!(m.exit_rate(s2, c), 1.0);
        let to1 = StateSet::singleton(2, s1);
        assert_eq!(m.mixed_rate(s2, &RelaxedAction::dirac(2, b), &to1).unwrap(), 2.0);
        let half = RelaxedAction::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(m.mixed_rate(s2, &half, &to1).unwrap(), 1.5);
        let p = RelaxedAction::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(m.mixed_exit_rate(s2, &p).unwrap(), 1.25);
        assert_eq!(m.mixed_exit_rate(s2, &RelaxedAction::dirac(2, c)).unwrap(), 1.0);
        assert_eq!(m.mixed_rate(s2, &half, &StateSet::all(2)).unwrap(), 0.0);
    }

    #[test]
    fn bad_support_is_rejected() {
        let m = catalog::figure_two();
        let err = m.mixed_exit_rate(0, &RelaxedAction::dirac(2, 1)).unwrap_err();
        assert_eq!(err.code(), "BAD_SUPPORT");
    }

    #[test]
    fn absorbing_state_is_valid() {
        let mut b = ModelBuilder::new(["x"], ["a"]);
        b.feasible(0, &[0]);
        let m = b.build().unwrap();
        assert_eq!(m.max_exit_rate(0), 0.0);
        assert_eq!(m.mixed_exit_rate(0, &RelaxedAction::dirac(1, 0)).unwrap(), 0.0);
    }

    #[test]
    fn row_sum_violation() {
        let mut b = ModelBuilder::new(["x", "y"], ["a"]);
        b.feasible(0, &[0]).feasible(1, &[0]);
        b.rate(0, 0, 1, 1.0).rate(0, 0, 0, -0.5);
        assert_eq!(b.build().unwrap_err().code(), "ROW_SUM");
    }

    #[test]
    fn negative_rate_and_empty_actions() {
        let mut b = ModelBuilder::new(["x", "y"], ["a"]);
        b.feasible(0, &[0]).feasible(1, &[0]);
        b.rate(0, 0, 1, -1.0);
        assert_eq!(b.build().unwrap_err().code(), "NEG_RATE");

        let mut b = ModelBuilder::new(["x", "y"], ["a"]);
        b.feasible(0, &[0]);
        assert_eq!(b.build().unwrap_err().code(), "EMPTY_ACTIONS");
    }

    #[test]
    fn diagonal_is_renormalized() {
        let mut b = ModelBuilder::new(["x", "y"], ["a"]);
        b.feasible(0, &[0]).feasible(1, &[0]);
        b.rate(0, 0, 1, 0.1 + 0.2).rate(0, 0, 0, -0.3 - 5e-10);
        let m = b.build().unwrap();
        assert_eq!(m.rate(0, 0, 0), -(0.1 + 0.2));
    }

    #[test]
    fn unknown_ids_in_raw_model() {
        let mut raw = catalog::figure_two().to_raw();
        raw.feasible.insert("3".into(), alloc::vec![Label::from("b")]);
        assert_eq!(validate_model(&raw).unwrap_err().code(), "UNKNOWN_ID");
    }

    #[test]
    fn raw_round_trip() {
        let m = catalog::figure_two_with_jump_costs(0.5, 1.0);
        assert_eq!(validate_model(&m.to_raw()).unwrap(), m);
    }

    #[test]
    fn extension_structure() {
        let m = catalog::figure_two();
        let ext = extend_with_initial_distribution(&m, &[0.5, 0.5]).unwrap();
        let e = &ext.model;
        assert_eq!(e.n_states(), 3);
        assert_eq!(e.rate(ext.entry_state, ext.entry_action, 0), 0.5);
        assert_eq!(e.rate(ext.entry_state, ext.entry_action, 1), 0.5);
        assert_eq!(e.exit_rate(ext.entry_state, ext.entry_action), 1.0);
        for x in 0..3 {
            assert!(e.is_feasible(x, ext.freeze_action));
            assert_eq!(e.exit_rate(x, ext.freeze_action), 0.0);
        }
        for x in 0..2 {
            for &a in m.feasible(x) {
                for y in 0..2 {
                    assert_eq!(e.rate(x, a, y).to_bits(), m.rate(x, a, y).to_bits());
                }
            }
        }
        assert!(validate_model(&e.to_raw()).is_ok());

        let point = extend_with_initial_distribution(&m, &[0.0, 1.0]).unwrap();
        assert_eq!(point.model.targets(point.entry_state, point.entry_action), &[(1, 1.0)]);
        assert_eq!(
            extend_with_initial_distribution(&m, &[0.5, 0.6]).unwrap_err().code(),
            "BAD_DIST"
        );
    }
}
