//! Discounted, average and constrained cost criteria, evaluated from exact marginal
//! curves or from simulated paths.
//!
//! Exact values integrate the state-action cell integrals of a [`MarginalCurve`] against
//! the discount factor, so they share the solver's grid. Jump costs `C(x, y)` enter as
//! the extra cost rate `c′(z, a) = Σ_y C(z, y) q̃(z, a, y)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::forward::{policy_marginals, substeps_for, MarginalCurve, OdeOptions, SolverError};
use crate::linalg;
use crate::markovize::NONEXPLOSIVE_TOL;
use crate::model::{CostStructure, InstantCost, ModelError, ModelSpec, StateId};
use crate::num::{abs, exp, ln, Moments};
use crate::paths::{GridView, Weight};
use crate::policy::{FiniteMemoryPolicy, MarkovPolicyGrid, Policy, TimeGrid};
use crate::runner::Runner;
use crate::simulator::{mc_mean, PathIntegral, SimError, Simulation, Trajectory};

/// Tolerance of the feasibility and dominance comparisons in [`evaluate_constraints`].
pub const CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("UNDEFINED_VALUE: {0}")]
    UndefinedValue(String),
    #[error("BAD_ALPHA: {0}")]
    BadAlpha(String),
    #[error("GRID_MISMATCH: {0}")]
    GridMismatch(String),
    #[error("MISSING_ACTIONS: the curve has no state-action marginals")]
    MissingActions,
    #[error("ASSUMPTION_VIOLATION: {0}")]
    AssumptionViolation(String),
    #[error("UNSUPPORTED: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CostError {
    pub fn code(&self) -> &'static str {
        match self {
            CostError::UndefinedValue(_) => "UNDEFINED_VALUE",
            CostError::BadAlpha(_) => "BAD_ALPHA",
            CostError::GridMismatch(_) => "GRID_MISMATCH",
            CostError::MissingActions => "MISSING_ACTIONS",
            CostError::AssumptionViolation(_) => "ASSUMPTION_VIOLATION",
            CostError::Unsupported(_) => "UNSUPPORTED",
            CostError::Solver(e) => e.code(),
            CostError::Sim(e) => e.code(),
            CostError::Model(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CostMethod {
    ExactCurve,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedCostResult {
    pub value: f64,
    pub method: CostMethod,
    /// Estimated quadrature plus truncation error for exact values, standard error for
    /// Monte Carlo.
    pub error_bound_or_se: f64,
    #[serde(rename = "truncation_T")]
    pub truncation_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostDecomposition {
    pub positive: f64,
    pub negative: f64,
    pub defined: bool,
}

impl CostDecomposition {
    pub fn total(&self) -> Option<f64> {
        self.defined.then_some(self.positive + self.negative)
    }
}

fn check_alpha(alpha: f64, infinite: bool) -> Result<(), CostError> {
    if !alpha.is_finite() || (infinite && alpha <= 0.0) {
        return Err(CostError::BadAlpha(format!(
            "{alpha} (the infinite horizon needs a finite positive discount rate)"
        )));
    }
    Ok(())
}

fn check_finite(costs: &CostStructure) -> Result<(), CostError> {
    let finite = costs.rate_table().iter().all(|c| c.is_finite())
        && costs.jump_table().iter().all(|c| c.is_finite())
        && costs
            .instants()
            .iter()
            .all(|i| i.time.is_finite() && i.values.iter().all(|c| c.is_finite()));
    if finite {
        Ok(())
    } else {
        Err(CostError::UndefinedValue("costs must be finite".into()))
    }
}

/// `C̃(z, p) = Σ_{y≠z} C(z, y) q̃(z, p, y)` for a relaxed action `p`.
pub fn jump_cost_rate(model: &ModelSpec, costs: &CostStructure, z: StateId, p: &[f64]) -> Result<f64, ModelError> {
    model.check_support(z, p)?;
    Ok((0..model.n_states())
        .filter(|&y| y != z)
        .map(|y| {
            let c = costs.jump(z, y);
            if c == 0.0 {
                0.0
            } else {
                c * model.mixed_target_rate(z, p, y)
            }
        })
        .sum())
}

/// `c′(z, a) = Σ_{y≠z} C(z, y) q̃(z, a, y)` as a table `z * n_actions + a`; zero at
/// infeasible pairs.
pub fn transform_jump_costs(model: &ModelSpec, costs: &CostStructure) -> Vec<f64> {
    let na = model.n_actions();
    let mut out = vec![0.0; model.n_states() * na];
    if !costs.has_jump_costs() {
        return out;
    }
    for z in 0..model.n_states() {
        for &a in model.feasible(z) {
            out[z * na + a] = model
                .targets(z, a)
                .iter()
                .map(|&(y, r)| costs.jump(z, y) * r)
                .sum();
        }
    }
    out
}

/// The same criterion with jump costs replaced by the cost rate `c + c′`.
pub fn costs_with_jump_rates(model: &ModelSpec, costs: &CostStructure) -> CostStructure {
    if !costs.has_jump_costs() {
        return costs.clone();
    }
    costs.with_rate_added(&transform_jump_costs(model, costs))
}

/// `(∫_cell e^{-αt} dt) / h` for every cell of `grid`.
pub fn cell_discounts(grid: TimeGrid, alpha: f64) -> Vec<f64> {
    let w = Weight::Discount(alpha);
    (0..grid.cells)
        .map(|k| w.mass(grid.time(k), grid.time(k + 1)) / grid.step)
        .collect()
}

/// `Σ_{z,a} r(z,a) ∫_cell P(t,z,a) dt` per cell, cemetery states excluded.
fn cell_values(curve: &MarginalCurve, model: &ModelSpec, rate: &[f64]) -> Result<Vec<f64>, CostError> {
    let acts = curve.actions.as_ref().ok_or(CostError::MissingActions)?;
    let (ns, na) = (curve.n_states, curve.n_actions);
    Ok((0..curve.grid.cells)
        .map(|k| {
            let mut v = 0.0;
            for z in (0..ns).filter(|&z| !model.is_cemetery(z)) {
                let i = (k * ns + z) * na;
                for a in 0..na {
                    let c = rate[z * na + a];
                    if c != 0.0 {
                        v += c * acts.cell_mass[i + a];
                    }
                }
            }
            v
        })
        .collect())
}

/// `Σ_{z,a} G(z,a) P(u,z,a)`, linearly interpolated between grid points.
fn instant_value(curve: &MarginalCurve, model: &ModelSpec, inst: &InstantCost) -> Result<f64, CostError> {
    let acts = curve.actions.as_ref().ok_or(CostError::MissingActions)?;
    let (ns, na) = (curve.n_states, curve.n_actions);
    let at = |k: usize| {
        let mut v = 0.0;
        for z in (0..ns).filter(|&z| !model.is_cemetery(z)) {
            for a in 0..na {
                let g = inst.values[z * na + a];
                if g != 0.0 {
                    v += g * acts.point[(k * ns + z) * na + a];
                }
            }
        }
        v
    };
    if let Some(k) = curve.grid.index_of(inst.time) {
        return Ok(at(k));
    }
    let k = curve.grid.cell_of(inst.time);
    let theta = (inst.time - curve.grid.time(k)) / curve.grid.step;
    Ok((1.0 - theta) * at(k) + theta * at(k + 1))
}

fn covers(curve: &MarginalCurve, horizon: f64) -> Result<(), CostError> {
    let end = curve.grid.horizon();
    if !(horizon >= 0.0) || horizon > end * (1.0 + 1e-12) + 1e-12 {
        return Err(CostError::GridMismatch(format!(
            "horizon {horizon} is outside the curve [0, {end}]"
        )));
    }
    Ok(())
}

/// `V_α^T = ∫_0^T e^{-αs} Σ_{z,a} c(z,a) P(s,z,a) ds + Σ_i e^{-α u_i} Σ_{z,a} G_i(z,a) P(u_i,z,a)`
/// with jump costs folded into the rate, from a state-action curve covering `[0, T]`.
///
/// Each grid cell contributes its state-action integral times the cell-averaged discount
/// factor. The reported error is the Richardson estimate `|V_h - V_{2h}| / 3` of that
/// quadrature.
pub fn finite_horizon_cost(
    curve: &MarginalCurve,
    model: &ModelSpec,
    costs: &CostStructure,
    alpha: f64,
    horizon: f64,
) -> Result<DiscountedCostResult, CostError> {
    check_alpha(alpha, false)?;
    check_finite(costs)?;
    covers(curve, horizon)?;
    let costs = costs_with_jump_rates(model, costs);
    let values = cell_values(curve, model, costs.rate_table())?;
    let grid = curve.grid;
    let h = grid.step;
    let weight = Weight::Discount(alpha);
    // cells fully inside [0, T]
    let full = grid.cell_of(horizon).min(grid.cells);
    let full = if grid.index_of(horizon).is_some() {
        grid.index_of(horizon).unwrap()
    } else {
        full
    };
    let fine_w = cell_discounts(grid, alpha);
    let mut fine = 0.0;
    for k in 0..full {
        fine += fine_w[k] * values[k];
    }
    let mut coarse = 0.0;
    let mut k = 0;
    while k + 1 < full {
        let w = weight.mass(grid.time(k), grid.time(k + 2)) / (2.0 * h);
        coarse += w * (values[k] + values[k + 1]);
        k += 2;
    }
    if k < full {
        coarse += fine_w[k] * values[k];
    }
    let mut partial = 0.0;
    if full < grid.cells && horizon > grid.time(full) {
        partial = values[full] / h * weight.mass(grid.time(full), horizon);
    }
    let mut instants = 0.0;
    for inst in costs.instants() {
        if inst.time <= horizon * (1.0 + 1e-12) {
            instants += exp(-alpha * inst.time) * instant_value(curve, model, inst)?;
        }
    }
    Ok(DiscountedCostResult {
        value: fine + partial + instants,
        method: CostMethod::ExactCurve,
        error_bound_or_se: abs(fine - coarse) / 3.0,
        truncation_t: horizon,
    })
}

/// `sup |c + c′|` over non-cemetery states and feasible actions.
fn rate_sup(model: &ModelSpec, costs: &CostStructure) -> f64 {
    let na = model.n_actions();
    let rate = costs_with_jump_rates(model, costs);
    let mut sup = 0.0f64;
    for z in (0..model.n_states()).filter(|&z| !model.is_cemetery(z)) {
        for &a in model.feasible(z) {
            sup = sup.max(abs(rate.rate_table()[z * na + a]));
        }
    }
    sup
}

/// Horizon `T` with `e^{-αT} sup|c + c′| / α <= ε`, and not before the last instant cost.
pub fn truncation_horizon(model: &ModelSpec, costs: &CostStructure, alpha: f64, eps: f64) -> Result<f64, CostError> {
    check_alpha(alpha, true)?;
    check_finite(costs)?;
    if !(eps > 0.0) {
        return Err(CostError::UndefinedValue(format!("tolerance {eps} must be positive")));
    }
    let sup = rate_sup(model, costs);
    let mut t = if sup > 0.0 {
        (ln(sup / (alpha * eps)) / alpha).max(0.0)
    } else {
        0.0
    };
    for inst in costs.instants() {
        t = t.max(inst.time);
    }
    Ok(t)
}

/// `V_α` from a curve reaching the truncation horizon of [`truncation_horizon`].
pub fn infinite_horizon_cost(
    curve: &MarginalCurve,
    model: &ModelSpec,
    costs: &CostStructure,
    alpha: f64,
    eps: f64,
) -> Result<DiscountedCostResult, CostError> {
    let t = truncation_horizon(model, costs, alpha, eps)?;
    let mut res = finite_horizon_cost(curve, model, costs, alpha, t)?;
    if rate_sup(model, costs) > 0.0 {
        res.error_bound_or_se += eps;
    }
    Ok(res)
}

/// Exact state-action curve of a Markov or finite-memory policy on `[0, horizon]`, with
/// enough substeps for the model's rates.
pub fn exact_curve(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    step: f64,
    horizon: f64,
) -> Result<MarginalCurve, CostError> {
    let grid = TimeGrid::covering(step, horizon.max(step)).map_err(SolverError::from)?;
    let opts = OdeOptions {
        substeps: substeps_for(model, step),
    };
    Ok(policy_marginals(model, policy, gamma, grid, opts)?)
}

/// [`infinite_horizon_cost`] solving the curve on a grid with the given step.
pub fn infinite_horizon_cost_exact(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    costs: &CostStructure,
    alpha: f64,
    eps: f64,
    step: f64,
) -> Result<DiscountedCostResult, CostError> {
    let t = truncation_horizon(model, costs, alpha, eps)?;
    let curve = exact_curve(model, policy, gamma, step, t)?;
    infinite_horizon_cost(&curve, model, costs, alpha, eps)
}

/// `V_α = γ (αI - Q_φ)^{-1} (c + c′)_φ` for a time-homogeneous Markov policy.
pub fn stationary_discounted_cost(
    model: &ModelSpec,
    phi: &MarkovPolicyGrid,
    gamma: &[f64],
    costs: &CostStructure,
    alpha: f64,
) -> Result<f64, CostError> {
    check_alpha(alpha, true)?;
    check_finite(costs)?;
    if !phi.is_time_homogeneous() {
        return Err(CostError::Unsupported("the resolvent needs a time-homogeneous policy".into()));
    }
    if !costs.instants().is_empty() {
        return Err(CostError::Unsupported("the resolvent has no instant costs".into()));
    }
    crate::policy::check_initial(model, gamma).map_err(SolverError::from)?;
    let (ns, na) = (model.n_states(), model.n_actions());
    let rate = costs_with_jump_rates(model, costs);
    let mut a = vec![0.0; ns * ns];
    let mut r = vec![0.0; ns];
    for z in 0..ns {
        a[z * ns + z] = alpha;
        if model.is_cemetery(z) {
            continue;
        }
        let p = phi.cell_action(0, z);
        for (act, &w) in p.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            r[z] += w * rate.rate_table()[z * na + act];
            for &(y, q) in model.targets(z, act) {
                a[z * ns + y] -= w * q;
                a[z * ns + z] += w * q;
            }
        }
    }
    let v = linalg::solve(a, r).ok_or_else(|| CostError::UndefinedValue("singular resolvent".into()))?;
    Ok(gamma.iter().zip(&v).map(|(g, v)| g * v).sum())
}

/// Discount weight `e^{-αt}`, as a function.
#[inline]
fn discount(alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        exp(-alpha * t)
    }
}

/// Jump cost charged at a jump from `z` to `y` while the relaxed action `p` is in force.
pub type JumpHook<'a> = &'a (dyn Fn(StateId, &[f64], StateId) -> f64 + Sync);

/// Pathwise discounted cost `∫_0^{T} e^{-αs} c(ξ_s, π_s) ds + Σ_{t_n <= T} e^{-α t_n} C + Σ_i e^{-α u_i} G_i`
/// for a grid policy.
///
/// Jump costs are `C(x_{n-1}, x_n)` unless a hook supplies them from the relaxed action
/// in force just before the jump. Paths are charged up to
/// [`Trajectory::observed_until`].
pub struct PathCost<'a> {
    model: &'a ModelSpec,
    view: GridView<'a>,
    rate: PathIntegral<'a>,
    costs: CostStructure,
    alpha: f64,
    horizon: f64,
    hook: Option<JumpHook<'a>>,
}

impl<'a> PathCost<'a> {
    pub fn new(
        model: &'a ModelSpec,
        policy: &'a Policy,
        costs: &CostStructure,
        alpha: f64,
        horizon: f64,
    ) -> Result<Self, CostError> {
        check_alpha(alpha, false)?;
        check_finite(costs)?;
        let view = GridView::of(policy).ok_or_else(|| {
            CostError::Unsupported("pathwise costs need a Markov or finite-memory policy".into())
        })?;
        let na = model.n_actions();
        let table = costs.rate_table().to_vec();
        let rate = PathIntegral::new(model, policy, Weight::Discount(alpha), move |z, p| {
            p.iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(a, &w)| w * table[z * na + a])
                .sum()
        })?;
        Ok(PathCost {
            model,
            view,
            rate,
            costs: costs.clone(),
            alpha,
            horizon,
            hook: None,
        })
    }

    /// Replaces `C(x, y)` by `hook(x, p, y)`.
    pub fn with_jump_hook(mut self, hook: JumpHook<'a>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn evaluate(&self, traj: &Trajectory) -> f64 {
        let end = self.horizon.min(traj.observed_until());
        let mut total = self.rate.integrate(traj, self.horizon);
        let grid = self.view.grid();
        let na = self.model.n_actions();
        let charges_jumps = self.hook.is_some() || self.costs.has_jump_costs();
        let mut instants: Vec<&InstantCost> = self.costs.instants().iter().filter(|i| i.time <= end).collect();
        instants.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut next_instant = 0;
        let mut m = self.view.initial_memory();
        let mut z = traj.path.initial;
        // state and memory in force on [previous jump, jump)
        let mut charge_instants = |upto: f64, z: StateId, m: usize, total: &mut f64| {
            while next_instant < instants.len() && instants[next_instant].time < upto {
                let inst = instants[next_instant];
                if !self.model.is_cemetery(z) {
                    let p = self.view.cell_decision(grid.cell_of(inst.time), z, m);
                    let g: f64 = p.iter().enumerate().map(|(a, &w)| w * inst.values[z * na + a]).sum();
                    *total += discount(self.alpha, inst.time) * g;
                }
                next_instant += 1;
            }
        };
        for j in &traj.path.jumps {
            if j.time > end {
                break;
            }
            charge_instants(j.time, z, m, &mut total);
            if charges_jumps && !self.model.is_cemetery(z) {
                let c = match self.hook {
                    Some(hook) => hook(z, self.view.cell_decision(grid.cell_of(j.time), z, m), j.state),
                    None => self.costs.jump(z, j.state),
                };
                total += discount(self.alpha, j.time) * c;
            }
            m = self.view.update(m, z, j.state);
            z = j.state;
        }
        charge_instants(f64::INFINITY, z, m, &mut total);
        total
    }
}

/// Sample mean and standard error of the pathwise discounted cost over stored
/// trajectories.
pub fn mc_discounted_cost(
    trajectories: &[Trajectory],
    model: &ModelSpec,
    policy: &Policy,
    costs: &CostStructure,
    alpha: f64,
    horizon: f64,
) -> Result<DiscountedCostResult, CostError> {
    let cost = PathCost::new(model, policy, costs, alpha, horizon)?;
    let mut m = Moments::default();
    for traj in trajectories {
        m.push(cost.evaluate(traj));
    }
    Ok(DiscountedCostResult {
        value: m.mean(),
        method: CostMethod::MonteCarlo,
        error_bound_or_se: m.std_error(),
        truncation_t: horizon,
    })
}

/// [`mc_discounted_cost`] over the trajectories of `sim`, generated and reduced through
/// `runner` without storing them. The simulation horizon should reach `horizon`.
pub fn mc_discounted_cost_streaming(
    runner: &dyn Runner,
    sim: &Simulation<'_>,
    cost: &PathCost<'_>,
) -> Result<DiscountedCostResult, CostError> {
    let (value, se) = mc_mean(runner, sim, &|traj| cost.evaluate(traj))?;
    Ok(DiscountedCostResult {
        value,
        method: CostMethod::MonteCarlo,
        error_bound_or_se: se,
        truncation_t: cost.horizon,
    })
}

/// `c = c⁺ + c⁻` pointwise for the rate, every instant and the jump costs.
pub fn decompose_signed(costs: &CostStructure) -> (CostStructure, CostStructure) {
    (costs.map(|c| c.max(0.0)), costs.map(|c| c.min(0.0)))
}

/// `V^⊕` and `V^⊖` of a signed criterion, each evaluated by `value`.
pub fn decomposed_value(
    costs: &CostStructure,
    mut value: impl FnMut(&CostStructure) -> Result<f64, CostError>,
) -> Result<CostDecomposition, CostError> {
    let (pos, neg) = decompose_signed(costs);
    let positive = value(&pos)?;
    let negative = value(&neg)?;
    let defined = positive.is_finite() || negative.is_finite();
    if !defined {
        return Err(CostError::UndefinedValue("both parts are infinite".into()));
    }
    Ok(CostDecomposition {
        positive,
        negative,
        defined,
    })
}

/// A sequence of average-cost approximations and its last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageCostEstimate {
    /// Discount rates or horizons, in the order evaluated.
    pub parameters: Vec<f64>,
    /// `α V_α` or `V_0^T / T`.
    pub values: Vec<f64>,
    pub estimate: f64,
    /// Whether the last three values move in one direction.
    pub monotone_tail: bool,
}

fn summarize(parameters: Vec<f64>, values: Vec<f64>) -> AverageCostEstimate {
    let tail = &values[values.len().saturating_sub(3)..];
    let up = tail.windows(2).all(|w| w[1] >= w[0]);
    let down = tail.windows(2).all(|w| w[1] <= w[0]);
    AverageCostEstimate {
        estimate: values.last().copied().unwrap_or(0.0),
        parameters,
        values,
        monotone_tail: up || down,
    }
}

/// `0.1 · 2^{-k}`, `k = 0..=10`.
pub fn default_abel_alphas() -> Vec<f64> {
    (0..=10).map(|k| 0.1 / (1u32 << k) as f64).collect()
}

/// `2^k`, `k = 0..=8`.
pub fn default_cesaro_horizons() -> Vec<f64> {
    (0..=8).map(|k| (1u32 << k) as f64).collect()
}

/// `α V_α` along a sequence of discount rates decreasing to zero.
pub fn average_cost_abel(
    mut value: impl FnMut(f64) -> Result<f64, CostError>,
    alphas: &[f64],
) -> Result<AverageCostEstimate, CostError> {
    let mut values = Vec::with_capacity(alphas.len());
    for &a in alphas {
        check_alpha(a, true)?;
        values.push(a * value(a)?);
    }
    Ok(summarize(alphas.to_vec(), values))
}

/// `V_0^T / T` along an increasing sequence of horizons.
pub fn average_cost_cesaro(
    mut value: impl FnMut(f64) -> Result<f64, CostError>,
    horizons: &[f64],
) -> Result<AverageCostEstimate, CostError> {
    let mut values = Vec::with_capacity(horizons.len());
    for &t in horizons {
        if !(t > 0.0) {
            return Err(CostError::GridMismatch(format!("horizon {t} must be positive")));
        }
        values.push(value(t)? / t);
    }
    Ok(summarize(horizons.to_vec(), values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite { eps: f64 },
}

/// A discounted-cost criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub costs: CostStructure,
    pub alpha: f64,
    pub horizon: Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub bound: f64,
    pub pi: f64,
    pub phi: f64,
    pub pi_feasible: bool,
    pub phi_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub objective_pi: f64,
    pub objective_phi: f64,
    pub constraints: Vec<ConstraintRow>,
    pub pi_feasible: bool,
    pub phi_feasible: bool,
    /// `φ` feasible with objective no worse than `π`; `None` when `π` is infeasible.
    pub dominance: Option<bool>,
    pub tolerance: f64,
}

impl ConstraintReport {
    /// Fails only when `π` is feasible and `φ` does not dominate it.
    pub fn holds(&self) -> bool {
        self.dominance != Some(false)
    }
}

/// Objective and constraint values of `π` and its Markovization `φ`, and whether `φ` is
/// feasible and no worse whenever `π` is feasible.
///
/// Each criterion needs nonnegative costs or a nonexplosive `φ` over its horizon.
pub fn evaluate_constraints(
    model: &ModelSpec,
    gamma: &[f64],
    pi: &FiniteMemoryPolicy,
    phi: &MarkovPolicyGrid,
    objective: &Criterion,
    constraints: &[(Criterion, f64)],
    step: f64,
) -> Result<ConstraintReport, CostError> {
    let all: Vec<&Criterion> = core::iter::once(objective).chain(constraints.iter().map(|(c, _)| c)).collect();
    let mut reach = step;
    for c in &all {
        let t = match c.horizon {
            Horizon::Finite(t) => {
                check_alpha(c.alpha, false)?;
                t
            }
            Horizon::Infinite { eps } => truncation_horizon(model, &c.costs, c.alpha, eps)?,
        };
        reach = reach.max(t);
    }
    let pi_policy = Policy::FiniteMemory(pi.clone());
    let phi_policy = Policy::Markov(phi.clone());
    let curve_pi = exact_curve(model, &pi_policy, gamma, step, reach)?;
    let curve_phi = exact_curve(model, &phi_policy, gamma, step, reach)?;
    let nonexplosive = curve_phi.mass_defects().iter().all(|&d| d <= NONEXPLOSIVE_TOL);
    let eval = |c: &Criterion, curve: &MarginalCurve| -> Result<f64, CostError> {
        Ok(match c.horizon {
            Horizon::Finite(t) => finite_horizon_cost(curve, model, &c.costs, c.alpha, t)?.value,
            Horizon::Infinite { eps } => infinite_horizon_cost(curve, model, &c.costs, c.alpha, eps)?.value,
        })
    };
    for (i, c) in all.iter().enumerate() {
        if !c.costs.is_nonnegative() && !nonexplosive {
            return Err(CostError::AssumptionViolation(format!(
                "criterion {i} has signed costs and φ loses mass"
            )));
        }
    }
    let objective_pi = eval(objective, &curve_pi)?;
    let objective_phi = eval(objective, &curve_phi)?;
    let mut rows = Vec::with_capacity(constraints.len());
    for (c, bound) in constraints {
        let (vp, vf) = (eval(c, &curve_pi)?, eval(c, &curve_phi)?);
        rows.push(ConstraintRow {
            bound: *bound,
            pi: vp,
            phi: vf,
            pi_feasible: vp <= bound + CONSTRAINT_TOL,
            phi_feasible: vf <= bound + CONSTRAINT_TOL,
        });
    }
    let pi_feasible = rows.iter().all(|r| r.pi_feasible);
    let phi_feasible = rows.iter().all(|r| r.phi_feasible);
    let dominance = pi_feasible.then_some(phi_feasible && objective_phi <= objective_pi + CONSTRAINT_TOL);
    Ok(ConstraintReport {
        objective_pi,
        objective_phi,
        constraints: rows,
        pi_feasible,
        phi_feasible,
        dominance,
        tolerance: CONSTRAINT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::forward::markov_marginals;
    use crate::model::{ModelBuilder, RelaxedAction};
    use crate::simulator::{simulate, SimConfig};

    fn unit_costs(model: &ModelSpec) -> CostStructure {
        let na = model.n_actions();
        let mut c = CostStructure::zero(model.n_states(), na);
        for z in 0..model.n_states() {
            for a in 0..na {
                c.set_rate(z, a, 1.0);
            }
        }
        c
    }

    fn flip(rate: f64) -> (ModelSpec, MarkovPolicyGrid) {
        let m = catalog::flip_chain(rate);
        let p = MarkovPolicyGrid::constant(&m, &[RelaxedAction::dirac(1, 0), RelaxedAction::dirac(1, 0)]).unwrap();
        (m, p)
    }

    #[test]
    fn unit_rate_closed_forms() {
        let (m, p) = flip(1.0);
        let grid = TimeGrid::covering(0.01, 3.0).unwrap();
        let curve = markov_marginals(&m, &p, &[1.0, 0.0], grid).unwrap();
        let c = unit_costs(&m);
        for alpha in [0.0, 0.5, 2.0] {
            let v = finite_horizon_cost(&curve, &m, &c, alpha, 3.0).unwrap();
            let exact = if alpha == 0.0 { 3.0 } else { (1.0 - exp(-3.0 * alpha)) / alpha };
            assert!(abs(v.value - exact) < 1e-10, "{alpha}: {} vs {exact}", v.value);
        }
        // off-grid horizon
        let v = finite_horizon_cost(&curve, &m, &c, 1.0, 1.234).unwrap();
        assert!(abs(v.value - (1.0 - exp(-1.234))) < 1e-10);
        let zero = CostStructure::zero(2, 1);
        assert_eq!(finite_horizon_cost(&curve, &m, &zero, 1.0, 3.0).unwrap().value, 0.0);
    }

    #[test]
    fn infinite_horizon_unit_rate() {
        let (m, p) = flip(2.0);
        let c = unit_costs(&m);
        let policy = Policy::Markov(p.clone());
        let v = infinite_horizon_cost_exact(&m, &policy, &[1.0, 0.0], &c, 1.0, 1e-8, 0.01).unwrap();
        assert!(abs(v.value - 1.0) < 1e-8, "{}", v.value);
        assert!(v.truncation_t > 18.0);
        let r = stationary_discounted_cost(&m, &p, &[1.0, 0.0], &c, 1.0).unwrap();
        assert!(abs(r - 1.0) < 1e-12);
    }

    #[test]
    fn terminal_instant_on_absorbing_model() {
        let mut b = ModelBuilder::new(["x"], ["a", "b"]);
        b.feasible(0, &[0, 1]);
        b.instant_cost(2.0, vec![3.0, 5.0]);
        let m = b.build().unwrap();
        let p = MarkovPolicyGrid::constant(&m, &[RelaxedAction::dirac(2, 1)]).unwrap();
        let curve = markov_marginals(&m, &p, &[1.0], TimeGrid::covering(0.1, 2.0).unwrap()).unwrap();
        let v = finite_horizon_cost(&curve, &m, m.costs(), 0.7, 2.0).unwrap();
        assert!(abs(v.value - exp(-1.4) * 5.0) < 1e-14);
        // the instant lies beyond a shorter horizon
        assert_eq!(finite_horizon_cost(&curve, &m, m.costs(), 0.7, 1.5).unwrap().value, 0.0);
    }

    #[test]
    fn jump_cost_rates_on_figure_two() {
        let m = catalog::figure_two();
        let (b, c) = (m.action_index("b").unwrap(), m.action_index("c").unwrap());
        let (one, two) = (m.state_index("1").unwrap(), m.state_index("2").unwrap());
        let na = m.n_actions();
        let mut costs = CostStructure::zero(m.n_states(), na);
        costs.set_jump(two, one, 1.0);
        assert_eq!(jump_cost_rate(&m, &costs, two, RelaxedAction::dirac(na, b).weights()).unwrap(), 2.0);
        costs.set_jump(two, one, 2.0);
        assert_eq!(jump_cost_rate(&m, &costs, two, RelaxedAction::dirac(na, c).weights()).unwrap(), 2.0);
        let kappa = 0.37;
        costs.set_jump(two, one, kappa);
        let extra = transform_jump_costs(&m, &costs);
        assert_eq!(extra[two * na + b], 2.0 * kappa);
        assert_eq!(extra[two * na + c], kappa);
        let mixed = jump_cost_rate(&m, &costs, two, &[0.5, 0.5]).unwrap();
        assert!(abs(mixed - 0.5 * (extra[two * na + b] + extra[two * na + c])) < 1e-15);
        assert!(transform_jump_costs(&m, &CostStructure::zero(m.n_states(), na)).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn unit_rate_pathwise_is_exact() {
        let (m, p) = flip(1.0);
        let policy = Policy::Markov(p);
        let cfg = SimConfig {
            horizon: 2.0,
            max_jumps: 10_000,
            trajectories: 50,
            seed: 3,
        };
        let trajs = simulate(&m, &policy, &[0.5, 0.5], cfg).unwrap();
        let v = mc_discounted_cost(&trajs, &m, &policy, &unit_costs(&m), 1.0, 2.0).unwrap();
        assert!(abs(v.value - (1.0 - exp(-2.0))) < 1e-14);
        assert!(v.error_bound_or_se < 1e-14);
        let zero = mc_discounted_cost(&trajs, &m, &policy, &CostStructure::zero(2, 1), 1.0, 2.0).unwrap();
        assert_eq!((zero.value, zero.error_bound_or_se), (0.0, 0.0));
    }

    #[test]
    fn flip_chain_averages() {
        let (m, p) = flip(1.0);
        let costs = catalog::flip_chain(1.0).costs().clone();
        let abel = average_cost_abel(
            |a| stationary_discounted_cost(&m, &p, &[1.0, 0.0], &costs, a),
            &default_abel_alphas(),
        )
        .unwrap();
        assert!(abs(abel.estimate - 0.5) < 2e-3, "{}", abel.estimate);
        assert!(abel.monotone_tail);
        let policy = Policy::Markov(p.clone());
        let curve = exact_curve(&m, &policy, &[1.0, 0.0], 0.01, 256.0).unwrap();
        let cesaro = average_cost_cesaro(
            |t| Ok(finite_horizon_cost(&curve, &m, &costs, 0.0, t)?.value),
            &default_cesaro_horizons(),
        )
        .unwrap();
        assert!(abs(cesaro.estimate - 0.5) < 2e-3, "{}", cesaro.estimate);
        assert!(abel.estimate <= cesaro.estimate + 1e-6);
    }

    #[test]
    fn signed_decomposition_recombines() {
        let mut c = CostStructure::zero(2, 2);
        c.set_rate(0, 0, -1.5);
        c.set_rate(0, 1, 2.0);
        c.set_rate(1, 0, -0.25);
        c.set_jump(0, 1, -3.0);
        c.set_jump(1, 0, 4.0);
        let (p, n) = decompose_signed(&c);
        assert!(p.is_nonnegative());
        for i in 0..4 {
            assert_eq!(p.rate_table()[i] + n.rate_table()[i], c.rate_table()[i]);
            assert!(n.rate_table()[i] <= 0.0);
            assert_eq!(p.jump_table()[i] + n.jump_table()[i], c.jump_table()[i]);
        }
    }
}
