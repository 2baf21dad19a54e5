//! Marginal distributions `P(t, z)` and `P(t, z, a)` of the controlled process.
//!
//! Two independent solvers share one time grid:
//!
//! - [`feller_series`] sums the minimal-solution series term by term, each term obtained
//!   from the previous one by integrating the exact sojourn exponentials against the
//!   inflow, interpolated linearly in the jump time;
//! - [`forward_ode`] integrates the forward equation with classical RK4, holding the
//!   generator fixed over each step (policies are piecewise constant on the grid).
//!
//! Finite-memory policies are solved on the product chain built by
//! [`augment`](crate::policy::augment) and projected back onto the original states.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, ModelSpec, StateId};
use crate::num::{abs, exp};
use crate::policy::{augment, check_initial, Augmentation, FiniteMemoryPolicy, MarkovPolicyGrid, Policy, PolicyError, TimeGrid};

/// Largest `step × max exit rate` accepted by the RK4 solver.
pub const MAX_STEP_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("STEP_TOO_COARSE: step {step} times max exit rate {rate} exceeds {MAX_STEP_RATE}; use at least {needed} substeps")]
    StepTooCoarse { step: f64, rate: f64, needed: usize },
    #[error("GRID_MISMATCH: {0}")]
    GridMismatch(String),
    #[error("UNSUPPORTED_POLICY: exact marginals need a Markov or finite-memory policy")]
    UnsupportedPolicy,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl SolverError {
    pub fn code(&self) -> &'static str {
        match self {
            SolverError::StepTooCoarse { .. } => "STEP_TOO_COARSE",
            SolverError::GridMismatch(_) => "GRID_MISMATCH",
            SolverError::UnsupportedPolicy => "UNSUPPORTED_POLICY",
            SolverError::Model(e) => e.code(),
            SolverError::Policy(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    from: usize,
    to: usize,
    rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct CellRates {
    exit: Vec<f64>,
    /// Off-diagonal rates, sorted by source state.
    edges: Vec<Edge>,
}

impl CellRates {
    /// `out = P Q` for the generator of this cell.
    #[inline]
    fn apply(&self, p: &[f64], out: &mut [f64]) {
        for ((o, &x), &q) in out.iter_mut().zip(p).zip(&self.exit) {
            *o = -q * x;
        }
        for e in &self.edges {
            out[e.to] += p[e.from] * e.rate;
        }
    }
}

/// The time-dependent rates `q(z, t, {y})` induced by a Markov policy.
#[derive(Debug, Clone)]
pub struct QFunction<'a> {
    model: &'a ModelSpec,
    policy: &'a MarkovPolicyGrid,
    cells: Vec<CellRates>,
}

impl<'a> QFunction<'a> {
    pub fn new(model: &'a ModelSpec, policy: &'a MarkovPolicyGrid) -> Result<Self, SolverError> {
        let (ns, na) = (model.n_states(), model.n_actions());
        if policy.n_states() != ns || policy.n_actions() != na {
            return Err(PolicyError::Dimension {
                expected: ns * na,
                got: policy.n_states() * policy.n_actions(),
            }
            .into());
        }
        let mut row = vec![0.0; ns];
        let mut cells: Vec<CellRates> = Vec::with_capacity(policy.grid().cells);
        for k in 0..policy.grid().cells {
            let mut exit = Vec::with_capacity(ns);
            let mut edges = Vec::new();
            for z in 0..ns {
                let p = policy.cell_action(k, z);
                row.iter_mut().for_each(|r| *r = 0.0);
                for &a in model.feasible(z) {
                    if p[a] > 0.0 {
                        for &(y, r) in model.targets(z, a) {
                            row[y] += p[a] * r;
                        }
                    }
                }
                exit.push(model.mixed_exit_rate_unchecked(z, p));
                edges.extend(
                    row.iter()
                        .enumerate()
                        .filter(|&(y, &r)| y != z && r > 0.0)
                        .map(|(y, &r)| Edge { from: z, to: y, rate: r }),
                );
            }
            cells.push(CellRates { exit, edges });
        }
        Ok(QFunction {
            model,
            policy,
            cells,
        })
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    pub fn policy(&self) -> &'a MarkovPolicyGrid {
        self.policy
    }

    /// `q(z, t, {y})` for `y != z`.
    pub fn rate(&self, z: StateId, t: f64, y: StateId) -> f64 {
        self.cell_at(t)
            .edges
            .iter()
            .filter(|e| e.from == z && e.to == y)
            .map(|e| e.rate)
            .sum()
    }

    /// `q(z, t)`.
    pub fn exit(&self, z: StateId, t: f64) -> f64 {
        self.cell_at(t).exit[z]
    }

    fn cell_at(&self, t: f64) -> &CellRates {
        &self.cells[self.policy.grid().cell_of(t)]
    }

    /// Internal step `grid.step / substeps`, checked against the policy breakpoints.
    fn internal_step(&self, grid: TimeGrid, substeps: usize) -> Result<f64, SolverError> {
        if substeps == 0 {
            return Err(SolverError::GridMismatch("substeps must be at least 1".into()));
        }
        let step = grid.step / substeps as f64;
        if !self.policy.grid().breakpoints_on(step) {
            return Err(SolverError::GridMismatch(format!(
                "solver step {step} does not divide the policy step {}",
                self.policy.grid().step
            )));
        }
        Ok(step)
    }
}

/// Substeps needed so that `step × max exit rate <= MAX_STEP_RATE`.
pub fn substeps_for(model: &ModelSpec, step: f64) -> usize {
    let r = model.global_max_exit_rate() * step / MAX_STEP_RATE;
    (libm::ceil(r * (1.0 - 1e-12)) as usize).max(1)
}

/// State-action part of a [`MarginalCurve`].
///
/// Besides point values the curve keeps, per grid cell, the integrals
/// `∫_cell P(t, z) dt` and `∫_cell P(t, z, a) dt`, and the conditional action law
/// over the cell. Point values use the conditional of the cell starting at the point
/// (the last point uses the last cell); for Markov policies this is the exact decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMarginals {
    /// `point[(k * n_states + z) * n_actions + a] = P(t_k, z, a)`
    pub point: Vec<f64>,
    /// `cell_state[k * n_states + z]`
    pub cell_state: Vec<f64>,
    /// `cell_mass[(k * n_states + z) * n_actions + a]`
    pub cell_mass: Vec<f64>,
    /// Conditional law of the action given the state over each cell; zero where the
    /// state carries no mass.
    pub conditional: Vec<f64>,
    /// Whether the conditional mixes several decisions (otherwise it is a bit-exact copy
    /// of the single decision in force).
    pub mixed: Vec<bool>,
}

/// Marginal probabilities tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCurve {
    pub grid: TimeGrid,
    pub n_states: usize,
    pub n_actions: usize,
    /// `probs[k * n_states + z] = P(t_k, z)`
    pub probs: Vec<f64>,
    pub actions: Option<ActionMarginals>,
    /// States standing in for the post-explosion state; their mass counts as defect.
    pub cemetery: Vec<bool>,
    /// Largest negative value clamped to zero.
    pub max_clamp: f64,
}

impl MarginalCurve {
    #[inline]
    pub fn prob(&self, k: usize, z: StateId) -> f64 {
        self.probs[k * self.n_states + z]
    }

    pub fn probs_at(&self, k: usize) -> &[f64] {
        &self.probs[k * self.n_states..(k + 1) * self.n_states]
    }

    /// `P(t_k, z, a)`, if the curve carries actions.
    pub fn state_action(&self, k: usize, z: StateId, a: usize) -> Option<f64> {
        self.actions
            .as_ref()
            .map(|m| m.point[(k * self.n_states + z) * self.n_actions + a])
    }

    pub fn conditional(&self, k: usize, z: StateId) -> Option<&[f64]> {
        let na = self.n_actions;
        self.actions.as_ref().map(|m| {
            let i = (k * self.n_states + z) * na;
            &m.conditional[i..i + na]
        })
    }

    /// `1 - Σ_z P(t_k, z)` over non-cemetery states.
    pub fn mass_defect_at(&self, k: usize) -> f64 {
        let live: f64 = self
            .probs_at(k)
            .iter()
            .zip(&self.cemetery)
            .filter(|(_, &c)| !c)
            .map(|(p, _)| p)
            .sum();
        1.0 - live
    }

    pub fn mass_defects(&self) -> Vec<f64> {
        (0..self.grid.points()).map(|k| self.mass_defect_at(k)).collect()
    }

    /// The curve restricted to its first `cells` cells.
    pub fn truncate(&self, cells: usize) -> Result<MarginalCurve, SolverError> {
        if cells == 0 || cells > self.grid.cells {
            return Err(SolverError::GridMismatch(format!(
                "cannot keep {cells} of {} cells",
                self.grid.cells
            )));
        }
        let (ns, na) = (self.n_states, self.n_actions);
        let points = cells + 1;
        Ok(MarginalCurve {
            grid: TimeGrid {
                step: self.grid.step,
                cells,
            },
            n_states: ns,
            n_actions: na,
            probs: self.probs[..points * ns].to_vec(),
            actions: self.actions.as_ref().map(|m| ActionMarginals {
                point: m.point[..points * ns * na].to_vec(),
                cell_state: m.cell_state[..cells * ns].to_vec(),
                cell_mass: m.cell_mass[..cells * ns * na].to_vec(),
                conditional: m.conditional[..cells * ns * na].to_vec(),
                mixed: m.mixed[..cells * ns].to_vec(),
            }),
            cemetery: self.cemetery.clone(),
            max_clamp: self.max_clamp,
        })
    }

    /// Coarser curve with step `factor × step`: point values are subsampled and cell
    /// integrals summed.
    pub fn resample(&self, factor: usize) -> Result<MarginalCurve, SolverError> {
        if factor == 0 || self.grid.cells % factor != 0 {
            return Err(SolverError::GridMismatch(format!(
                "cannot merge {} cells by {factor}",
                self.grid.cells
            )));
        }
        let (ns, na) = (self.n_states, self.n_actions);
        let cells = self.grid.cells / factor;
        let grid = TimeGrid {
            step: self.grid.step * factor as f64,
            cells,
        };
        let probs = (0..=cells)
            .flat_map(|k| self.probs_at(k * factor).iter().copied())
            .collect();
        let actions = self.actions.as_ref().map(|m| {
            let point = (0..=cells)
                .flat_map(|k| {
                    let i = k * factor * ns * na;
                    m.point[i..i + ns * na].iter().copied()
                })
                .collect();
            let mut acc = Accumulator::new(cells, ns, na);
            for k in 0..cells {
                for j in k * factor..(k + 1) * factor {
                    for z in 0..ns {
                        let i = (j * ns + z) * na;
                        let cond = &m.conditional[i..i + na];
                        acc.add_split(
                            k,
                            z,
                            m.cell_state[j * ns + z],
                            &m.cell_mass[i..i + na],
                            cond,
                            m.mixed[j * ns + z],
                        );
                    }
                }
            }
            let (cell_state, cell_mass, conditional, mixed) = acc.finish();
            ActionMarginals {
                point,
                cell_state,
                cell_mass,
                conditional,
                mixed,
            }
        });
        Ok(MarginalCurve {
            grid,
            n_states: ns,
            n_actions: na,
            probs,
            actions,
            cemetery: self.cemetery.clone(),
            max_clamp: self.max_clamp,
        })
    }
}

/// `1 - Σ_z P(t, z)` at grid time `t`.
pub fn mass_defect(curve: &MarginalCurve, t: f64) -> Result<f64, SolverError> {
    let k = curve
        .grid
        .index_of(t)
        .ok_or_else(|| SolverError::GridMismatch(format!("t = {t} is not a grid point")))?;
    Ok(curve.mass_defect_at(k))
}

/// Builds cell integrals and conditionals while tracking whether a single decision
/// vector is in force over each (cell, state).
struct Accumulator {
    na: usize,
    ns: usize,
    cell_state: Vec<f64>,
    cell_mass: Vec<f64>,
    /// First decision seen with positive mass, per (cell, state).
    single: Vec<Option<Vec<f64>>>,
    mixed: Vec<bool>,
}

impl Accumulator {
    fn new(cells: usize, ns: usize, na: usize) -> Self {
        Accumulator {
            na,
            ns,
            cell_state: vec![0.0; cells * ns],
            cell_mass: vec![0.0; cells * ns * na],
            single: vec![None; cells * ns],
            mixed: vec![false; cells * ns],
        }
    }

    /// Adds mass `w` spent at state `z` in cell `k` under `decision`.
    #[inline]
    fn add(&mut self, k: usize, z: StateId, w: f64, decision: &[f64]) {
        let i = k * self.ns + z;
        self.cell_state[i] += w;
        for (m, &d) in self.cell_mass[i * self.na..(i + 1) * self.na].iter_mut().zip(decision) {
            *m += w * d;
        }
        if w > 0.0 {
            self.note(i, decision, false);
        }
    }

    /// Adds a pre-aggregated piece with its own conditional.
    fn add_split(&mut self, k: usize, z: StateId, w: f64, mass: &[f64], cond: &[f64], mixed: bool) {
        let i = k * self.ns + z;
        self.cell_state[i] += w;
        for (m, &x) in self.cell_mass[i * self.na..(i + 1) * self.na].iter_mut().zip(mass) {
            *m += x;
        }
        if w > 0.0 {
            self.note(i, cond, mixed);
        }
    }

    fn note(&mut self, i: usize, decision: &[f64], mixed: bool) {
        if mixed {
            self.mixed[i] = true;
        }
        if self.mixed[i] {
            return;
        }
        match &self.single[i] {
            None => self.single[i] = Some(decision.to_vec()),
            Some(d) if d.as_slice() == decision => {}
            Some(_) => self.mixed[i] = true,
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
        let na = self.na;
        let mut conditional = vec![0.0; self.cell_mass.len()];
        for (i, single) in self.single.iter().enumerate() {
            let out = &mut conditional[i * na..(i + 1) * na];
            let s = self.cell_state[i];
            match single {
                Some(d) if !self.mixed[i] => out.copy_from_slice(d),
                _ if s > 0.0 => {
                    let mass = &self.cell_mass[i * na..(i + 1) * na];
                    let total: f64 = mass.iter().map(|&x| x.max(0.0)).sum();
                    if total > 0.0 {
                        for (o, &x) in out.iter_mut().zip(mass) {
                            *o = x.max(0.0) / total;
                        }
                    }
                }
                _ => {}
            }
        }
        (self.cell_state, self.cell_mass, conditional, self.mixed)
    }
}

/// Mapping of solver states onto reported states.
struct Projection<'p> {
    base_of: &'p [usize],
    n_base: usize,
    cemetery: Vec<bool>,
}

impl Projection<'_> {
    fn project(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &x) in p.iter().enumerate() {
            out[self.base_of[i]] += x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeOptions {
    /// RK4 steps per grid cell.
    pub substeps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { substeps: 1 }
    }
}

/// Chain-level RK4 output: the projected curve and the raw chain probabilities.
struct OdeRun {
    curve: MarginalCurve,
    chain_probs: Vec<f64>,
}

fn integrate(
    q: &QFunction<'_>,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
    proj: &Projection<'_>,
    with_actions: bool,
) -> Result<OdeRun, SolverError> {
    let model = q.model;
    check_initial(model, gamma)?;
    let dt = q.internal_step(grid, opts.substeps)?;
    let rate = model.global_max_exit_rate();
    if dt * rate > MAX_STEP_RATE {
        return Err(SolverError::StepTooCoarse {
            step: dt,
            rate,
            needed: substeps_for(model, grid.step),
        });
    }
    let n = model.n_states();
    let (nb, na) = (proj.n_base, model.n_actions());
    let mut p = gamma.to_vec();
    let mut chain_probs = Vec::with_capacity(grid.points() * n);
    let mut probs = vec![0.0; grid.points() * nb];
    chain_probs.extend_from_slice(&p);
    proj.project(&p, &mut probs[..nb]);

    let mut acc = with_actions.then(|| Accumulator::new(grid.cells, nb, na));
    let (mut y, mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut integral = vec![0.0; n];
    let mut max_clamp: f64 = 0.0;
    let h = dt;
    let pgrid = q.policy.grid();
    for k in 0..grid.cells {
        for j in 0..opts.substeps {
            let t = (k * opts.substeps + j) as f64 * dt;
            let pc = pgrid.cell_of(t);
            let cell = &q.cells[pc];
            cell.apply(&p, &mut k1);
            for i in 0..n {
                y[i] = p[i] + 0.5 * h * k1[i];
                integral[i] = p[i] + 2.0 * y[i];
            }
            cell.apply(&y, &mut k2);
            for i in 0..n {
                y[i] = p[i] + 0.5 * h * k2[i];
                integral[i] += 2.0 * y[i];
            }
            cell.apply(&y, &mut k3);
            for i in 0..n {
                y[i] = p[i] + h * k3[i];
                integral[i] += y[i];
            }
            cell.apply(&y, &mut k4);
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if p[i] < 0.0 {
                    max_clamp = max_clamp.max(-p[i]);
                    p[i] = 0.0;
                }
            }
            if let Some(acc) = acc.as_mut() {
                for i in 0..n {
                    acc.add(k, proj.base_of[i], h / 6.0 * integral[i], q.policy.cell_action(pc, i));
                }
            }
        }
        chain_probs.extend_from_slice(&p);
        proj.project(&p, &mut probs[(k + 1) * nb..(k + 2) * nb]);
    }

    let actions = acc.map(|acc| {
        let (cell_state, cell_mass, conditional, mixed) = acc.finish();
        let mut point = vec![0.0; grid.points() * nb * na];
        for k in 0..grid.points() {
            let c = k.min(grid.cells - 1);
            for z in 0..nb {
                let pz = probs[k * nb + z];
                for a in 0..na {
                    point[(k * nb + z) * na + a] = pz * conditional[(c * nb + z) * na + a];
                }
            }
        }
        ActionMarginals {
            point,
            cell_state,
            cell_mass,
            conditional,
            mixed,
        }
    });
    Ok(OdeRun {
        curve: MarginalCurve {
            grid,
            n_states: nb,
            n_actions: na,
            probs,
            actions,
            cemetery: proj.cemetery.clone(),
            max_clamp,
        },
        chain_probs,
    })
}

fn identity(model: &ModelSpec) -> (Vec<usize>, Vec<bool>) {
    ((0..model.n_states()).collect(), model.cemetery_mask().to_vec())
}

/// State marginals by RK4 on the forward equation from `P(0, ·) = γ`.
pub fn forward_ode(q: &QFunction<'_>, gamma: &[f64], grid: TimeGrid) -> Result<MarginalCurve, SolverError> {
    forward_ode_with(q, gamma, grid, OdeOptions::default())
}

pub fn forward_ode_with(
    q: &QFunction<'_>,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MarginalCurve, SolverError> {
    let (base_of, cemetery) = identity(q.model);
    let proj = Projection {
        base_of: &base_of,
        n_base: q.model.n_states(),
        cemetery,
    };
    Ok(integrate(q, gamma, grid, opts, &proj, false)?.curve)
}

/// State-action marginals `P(t, z, a) = P(t, z) φ(a|z, t)` of a Markov policy.
pub fn markov_marginals(
    model: &ModelSpec,
    phi: &MarkovPolicyGrid,
    gamma: &[f64],
    grid: TimeGrid,
) -> Result<MarginalCurve, SolverError> {
    markov_marginals_with(model, phi, gamma, grid, OdeOptions::default())
}

pub fn markov_marginals_with(
    model: &ModelSpec,
    phi: &MarkovPolicyGrid,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MarginalCurve, SolverError> {
    let q = QFunction::new(model, phi)?;
    let (base_of, cemetery) = identity(model);
    let proj = Projection {
        base_of: &base_of,
        n_base: model.n_states(),
        cemetery,
    };
    Ok(integrate(&q, gamma, grid, opts, &proj, true)?.curve)
}

/// Exact marginals of a finite-memory policy.
#[derive(Debug, Clone)]
pub struct MemoryMarginals {
    /// State-action marginals on the original states.
    pub marginal: MarginalCurve,
    /// State marginals on the product chain, indexed as in `augmentation`.
    pub augmented: MarginalCurve,
    pub augmentation: Augmentation,
}

/// Solves the product chain of a finite-memory policy started from `γ` with the
/// policy's initial memory, and marginalizes the memory out.
pub fn finite_memory_marginals(
    model: &ModelSpec,
    policy: &FiniteMemoryPolicy,
    gamma: &[f64],
    grid: TimeGrid,
) -> Result<MemoryMarginals, SolverError> {
    finite_memory_marginals_with(model, policy, gamma, grid, OdeOptions::default())
}

pub fn finite_memory_marginals_with(
    model: &ModelSpec,
    policy: &FiniteMemoryPolicy,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MemoryMarginals, SolverError> {
    check_initial(model, gamma)?;
    let aug = augment(model, policy)?;
    let start = aug.lift_distribution(gamma, policy.initial_memory());
    solve_augmented(model, aug, &start, grid, opts)
}

/// As [`finite_memory_marginals`], from a distribution over the product states.
pub fn finite_memory_marginals_from(
    model: &ModelSpec,
    policy: &FiniteMemoryPolicy,
    augmented_initial: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MemoryMarginals, SolverError> {
    let aug = augment(model, policy)?;
    solve_augmented(model, aug, augmented_initial, grid, opts)
}

fn solve_augmented(
    model: &ModelSpec,
    aug: Augmentation,
    start: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MemoryMarginals, SolverError> {
    let q = QFunction::new(&aug.model, &aug.policy)?;
    let ns = model.n_states();
    let base_of: Vec<usize> = (0..aug.model.n_states()).map(|i| i % ns).collect();
    let proj = Projection {
        base_of: &base_of,
        n_base: ns,
        cemetery: model.cemetery_mask().to_vec(),
    };
    let run = integrate(&q, start, grid, opts, &proj, true)?;
    let augmented = MarginalCurve {
        grid,
        n_states: aug.model.n_states(),
        n_actions: aug.model.n_actions(),
        probs: run.chain_probs,
        actions: None,
        cemetery: aug.model.cemetery_mask().to_vec(),
        max_clamp: run.curve.max_clamp,
    };
    Ok(MemoryMarginals {
        marginal: run.curve,
        augmented,
        augmentation: aug,
    })
}

/// State-action marginals of a Markov or finite-memory policy.
pub fn policy_marginals(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<MarginalCurve, SolverError> {
    match policy {
        Policy::Markov(phi) => markov_marginals_with(model, phi, gamma, grid, opts),
        Policy::FiniteMemory(fm) => Ok(finite_memory_marginals_with(model, fm, gamma, grid, opts)?.marginal),
        Policy::General(_) => Err(SolverError::UnsupportedPolicy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub n_max: usize,
    /// Stop once the sup-norm of the latest term falls below this.
    pub tol: f64,
    /// Quadrature steps per grid cell.
    pub substeps: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            n_max: 10_000,
            tol: 1e-10,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub curve: MarginalCurve,
    /// Number of terms summed, including the zeroth.
    pub terms: usize,
    /// Sup-norm of each term over the grid.
    pub term_sups: Vec<f64>,
    /// Smallest entry of any term; partial sums are nondecreasing when it is `>= 0`.
    pub term_min: f64,
    /// `false` when `n_max` terms were summed and the last was still above `tol`
    /// (the NO_CONVERGENCE flag).
    pub converged: bool,
}

/// One term of the series, stored only on the states it can charge.
struct Term {
    states: Vec<usize>,
    /// `values[j * states.len() + i]` at internal time `j`.
    values: Vec<f64>,
}

/// Minimal solution `Σ_n P̄^(n)(t, ·)` from the initial law `γ`.
///
/// Term `n` is the probability of being at `z` at time `t` after exactly `n` jumps. It is
/// built from term `n-1` by the last-jump recursion
/// `P_n(t,z) = ∫_0^t e^{-∫_s^t q(z)} Σ_y P_{n-1}(s,y) q(y,s,{z}) ds`
/// integrating the exit factor exactly against the inflow interpolated linearly in `s`.
pub fn feller_series(
    q: &QFunction<'_>,
    gamma: &[f64],
    grid: TimeGrid,
    opts: SeriesOptions,
) -> Result<SeriesResult, SolverError> {
    let model = q.model;
    check_initial(model, gamma)?;
    if opts.n_max == 0 {
        return Err(SolverError::GridMismatch("n_max must be at least 1".into()));
    }
    let s = opts.substeps;
    let dt = q.internal_step(grid, s)?;
    let steps = grid.cells * s;
    let n = model.n_states();
    let pgrid = q.policy.grid();
    let cell_of_step: Vec<usize> = (0..steps).map(|j| pgrid.cell_of(j as f64 * dt)).collect();
    let decay: Vec<Vec<Decay>> = q
        .cells
        .iter()
        .map(|c| c.exit.iter().map(|&r| Decay::new(r, dt)).collect())
        .collect();

    let mut sum = vec![0.0; grid.points() * n];
    let mut term_sups = Vec::new();
    let mut term_min = f64::INFINITY;

    // term 0: no jump yet
    let states: Vec<usize> = (0..n).filter(|&z| gamma[z] > 0.0).collect();
    let mut values = vec![0.0; (steps + 1) * states.len()];
    for (i, &z) in states.iter().enumerate() {
        values[i] = gamma[z];
    }
    let w = states.len();
    for j in 0..steps {
        let d = &decay[cell_of_step[j]];
        for (i, &z) in states.iter().enumerate() {
            values[(j + 1) * w + i] = values[j * w + i] * d[z].factor;
        }
    }
    let mut term = Term { states, values };
    let mut terms = 0;
    let mut converged = false;
    let mut used_cells = cell_of_step.clone();
    used_cells.dedup();
    used_cells.sort_unstable();
    used_cells.dedup();
    let mut local = vec![usize::MAX; n];
    loop {
        let (sup, min) = accumulate(&term, &mut sum, n, s, grid.points());
        terms += 1;
        term_sups.push(sup);
        term_min = term_min.min(min);
        if sup < opts.tol {
            converged = true;
            break;
        }
        if terms == opts.n_max {
            break;
        }
        term = next_term(q, &term, &cell_of_step, &used_cells, &decay, &mut local);
    }
    Ok(SeriesResult {
        curve: MarginalCurve {
            grid,
            n_states: n,
            n_actions: model.n_actions(),
            probs: sum,
            actions: None,
            cemetery: model.cemetery_mask().to_vec(),
            max_clamp: 0.0,
        },
        terms,
        term_sups,
        term_min: if term_min.is_finite() { term_min } else { 0.0 },
        converged,
    })
}

/// Over one internal step of length `dt` at exit rate `r`: the survival factor and the
/// weights of `∫_0^dt e^{-r (dt - s)} f(s) ds` for `f` linear between `f(0)` and `f(dt)`.
struct Decay {
    factor: f64,
    w0: f64,
    w1: f64,
}

impl Decay {
    fn new(r: f64, dt: f64) -> Self {
        let x = r * dt;
        let factor = exp(-x);
        let (w0, w1) = if x < 0.05 {
            // Taylor series in x; the closed forms cancel badly here
            let (mut a, mut b) = (0.0, 0.0);
            let mut pow = 1.0;
            let mut fact = 2.0;
            for n in 1..12 {
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                a += sign * n as f64 * pow / fact;
                b += sign * pow / fact;
                pow *= x;
                fact *= (n + 2) as f64;
            }
            (a, b)
        } else {
            let g = -libm::expm1(-x) / x;
            ((g - factor) / x, (1.0 - g) / x)
        };
        Decay {
            factor,
            w0: w0 * dt,
            w1: w1 * dt,
        }
    }
}

fn accumulate(term: &Term, sum: &mut [f64], n: usize, substeps: usize, points: usize) -> (f64, f64) {
    let w = term.states.len();
    let (mut sup, mut min) = (0.0f64, f64::INFINITY);
    for v in &term.values {
        sup = sup.max(abs(*v));
        min = min.min(*v);
    }
    for k in 0..points {
        let j = k * substeps;
        for (i, &z) in term.states.iter().enumerate() {
            sum[k * n + z] += term.values[j * w + i];
        }
    }
    (sup, if w == 0 { 0.0 } else { min })
}

fn next_term(
    q: &QFunction<'_>,
    prev: &Term,
    cell_of_step: &[usize],
    used_cells: &[usize],
    decay: &[Vec<Decay>],
    local: &mut [usize],
) -> Term {
    let n = local.len();
    let pw = prev.states.len();
    local.iter_mut().for_each(|l| *l = usize::MAX);
    for (i, &y) in prev.states.iter().enumerate() {
        local[y] = i;
    }
    // states reachable in one jump from the previous term's support, in any cell
    let mut reach = vec![false; n];
    for &c in used_cells {
        for e in &q.cells[c].edges {
            if local[e.from] != usize::MAX {
                reach[e.to] = true;
            }
        }
    }
    let states: Vec<usize> = (0..n).filter(|&z| reach[z]).collect();
    let w = states.len();
    let steps = cell_of_step.len();
    let mut values = vec![0.0; (steps + 1) * w];
    if w == 0 {
        return Term { states, values };
    }
    let mut target = vec![usize::MAX; n];
    for (i, &z) in states.iter().enumerate() {
        target[z] = i;
    }
    // per used cell: edges restricted to (prev support) → (new support), in local indices
    let mut local_edges: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); q.cells.len()];
    for &c in used_cells {
        local_edges[c] = q.cells[c]
            .edges
            .iter()
            .filter(|e| local[e.from] != usize::MAX)
            .map(|e| (local[e.from], target[e.to], e.rate))
            .collect();
    }
    let mut f0 = vec![0.0; w];
    let mut f1 = vec![0.0; w];
    for j in 0..steps {
        let c = cell_of_step[j];
        f0.iter_mut().for_each(|x| *x = 0.0);
        f1.iter_mut().for_each(|x| *x = 0.0);
        let (a, b) = (&prev.values[j * pw..(j + 1) * pw], &prev.values[(j + 1) * pw..(j + 2) * pw]);
        for &(from, to, r) in &local_edges[c] {
            f0[to] += a[from] * r;
            f1[to] += b[from] * r;
        }
        let d = &decay[c];
        for (i, &z) in states.iter().enumerate() {
            let e = &d[z];
            values[(j + 1) * w + i] = values[j * w + i] * e.factor + e.w0 * f0[i] + e.w1 * f1[i];
        }
    }
    Term { states, values }
}
