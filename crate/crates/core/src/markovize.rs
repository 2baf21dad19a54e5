//! The Markov policy `φ(a|z,t) = P(t,z,a) / P(t,z)` of an arbitrary policy, and the
//! comparison of its marginals with those of the original policy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::forward::{
    finite_memory_marginals_with, markov_marginals_with, MarginalCurve, MemoryMarginals,
    OdeOptions, SolverError,
};
use crate::model::{ModelSpec, RelaxedAction};
use crate::num::{abs, sqrt};
use crate::policy::{fallback_action, FiniteMemoryPolicy, MarkovPolicyGrid, Policy, PolicyError, TimeGrid};
use crate::simulator::{walk_grid, SimError, Trajectory};

/// Cells whose average state probability is at or below this use the fallback action.
pub const EPS_MASS: f64 = 1e-12;
/// Monte Carlo cells with fewer visits than this use the fallback action.
pub const MIN_CELL_COUNT: usize = 25;
/// Mass defect below which the process counts as nonexplosive.
pub const NONEXPLOSIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarkovizeError {
    #[error("GRID_MISMATCH: {0}")]
    GridMismatch(String),
    #[error("MISSING_ACTIONS: the curve has no state-action marginals")]
    MissingActions,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl MarkovizeError {
    pub fn code(&self) -> &'static str {
        match self {
            MarkovizeError::GridMismatch(_) => "GRID_MISMATCH",
            MarkovizeError::MissingActions => "MISSING_ACTIONS",
            MarkovizeError::Policy(e) => e.code(),
            MarkovizeError::Solver(e) => e.code(),
            MarkovizeError::Sim(e) => e.code(),
        }
    }
}

/// A Markovized policy with the cells where the fallback action was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Markovization {
    pub policy: MarkovPolicyGrid,
    /// `fallback[k * n_states + z]`
    pub fallback: Vec<bool>,
}

impl Markovization {
    pub fn fallback_cells(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// `φ(·|z, cell k)` from exact state-action marginals: the conditional action law of the
/// cell where the state has average probability above [`EPS_MASS`], else the fallback
/// action. The policy lives on the curve's grid.
pub fn derive_markov_exact(model: &ModelSpec, curve: &MarginalCurve) -> Result<Markovization, MarkovizeError> {
    derive_with_fallback(model, curve, |z| fallback_action(model, z))
}

/// [`derive_markov_exact`] with a caller-chosen fallback selector.
pub fn derive_with_fallback(
    model: &ModelSpec,
    curve: &MarginalCurve,
    fallback: impl Fn(usize) -> usize,
) -> Result<Markovization, MarkovizeError> {
    let acts = curve.actions.as_ref().ok_or(MarkovizeError::MissingActions)?;
    let (ns, na) = (model.n_states(), model.n_actions());
    if curve.n_states != ns || curve.n_actions != na {
        return Err(MarkovizeError::GridMismatch(format!(
            "curve is {}×{}, model is {ns}×{na}",
            curve.n_states, curve.n_actions
        )));
    }
    let cells = curve.grid.cells;
    let mut weights = Vec::with_capacity(cells * ns * na);
    let mut fell_back = vec![false; cells * ns];
    for k in 0..cells {
        for z in 0..ns {
            let i = k * ns + z;
            let cond = &acts.conditional[i * na..(i + 1) * na];
            if acts.cell_state[i] / curve.grid.step > EPS_MASS {
                if acts.mixed[i] {
                    let total: f64 = cond.iter().sum();
                    weights.extend(cond.iter().map(|&w| w / total));
                } else {
                    weights.extend_from_slice(cond);
                }
            } else {
                fell_back[i] = true;
                weights.extend_from_slice(&RelaxedAction::dirac(na, fallback(z)));
            }
        }
    }
    Ok(Markovization {
        policy: MarkovPolicyGrid::from_weights(model, curve.grid, weights)?,
        fallback: fell_back,
    })
}

/// Monte Carlo Markovization with per-cell visit counts and standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMarkovization {
    pub policy: MarkovPolicyGrid,
    /// `counts[k * n_states + z]`: paths at `z` at the start of cell `k`.
    pub counts: Vec<usize>,
    /// Standard error of each estimated weight, `[(k * n_states + z) * n_actions + a]`.
    pub std_errors: Vec<f64>,
    pub fallback: Vec<bool>,
}

/// `φ̂(a|z, cell k)`: the average decision weight of `a` over the paths at `z` at the
/// start `t_k` of the cell, when at least `min_count` paths are there.
pub fn derive_markov_mc(
    trajectories: &[Trajectory],
    model: &ModelSpec,
    policy: &Policy,
    grid: TimeGrid,
    min_count: usize,
) -> Result<McMarkovization, MarkovizeError> {
    let (ns, na) = (model.n_states(), model.n_actions());
    let cells = grid.cells;
    let mut counts = vec![0usize; grid.points() * ns];
    let mut sum = vec![0.0; grid.points() * ns * na];
    let mut sq = vec![0.0; grid.points() * ns * na];
    for traj in trajectories {
        walk_grid(traj, model, policy, grid, |k, z, p| {
            counts[k * ns + z] += 1;
            for (a, &w) in p.iter().enumerate() {
                sum[(k * ns + z) * na + a] += w;
                sq[(k * ns + z) * na + a] += w * w;
            }
        })?;
    }
    counts.truncate(cells * ns);
    let mut weights = Vec::with_capacity(cells * ns * na);
    let mut std_errors = vec![0.0; cells * ns * na];
    let mut fallback = vec![false; cells * ns];
    for i in 0..cells * ns {
        let n = counts[i];
        if n < min_count.max(1) {
            fallback[i] = true;
            weights.extend_from_slice(&RelaxedAction::dirac(na, fallback_action(model, i % ns)));
            continue;
        }
        let nf = n as f64;
        let row = &sum[i * na..(i + 1) * na];
        let total: f64 = row.iter().sum();
        for a in 0..na {
            let mean = row[a] / nf;
            let var = if n > 1 {
                ((sq[i * na + a] - nf * mean * mean) / (nf - 1.0)).max(0.0)
            } else {
                0.0
            };
            std_errors[i * na + a] = sqrt(var / nf);
            weights.push(row[a] / total);
        }
    }
    Ok(McMarkovization {
        policy: MarkovPolicyGrid::from_weights(model, grid, weights)?,
        counts,
        std_errors,
        fallback,
    })
}

/// Dominance and equality of the marginals of `φ` against those of `π`.
///
/// State marginals are compared at every grid point; state-action marginals, when both
/// curves carry them, at every grid point as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `sup max(P_φ - P_π, 0)`
    pub violation_sup: f64,
    /// `sup |P_φ - P_π|`
    pub equality_sup: f64,
    pub state_equality_sup: f64,
    pub state_action_equality_sup: Option<f64>,
    /// Mass defect of `P_φ` at each grid point.
    pub mass_defects: Vec<f64>,
    pub mass_defect_max: f64,
    /// Last grid time up to which the mass defect of `P_φ` stays within
    /// [`NONEXPLOSIVE_TOL`].
    pub nonexplosive_until: f64,
    /// `sup |P_φ - P_π|` over grid times up to `nonexplosive_until`.
    pub equality_sup_nonexplosive: f64,
}

pub fn compare_marginals(phi: &MarginalCurve, pi: &MarginalCurve) -> Result<DominanceReport, MarkovizeError> {
    if phi.grid.cells != pi.grid.cells
        || abs(phi.grid.step - pi.grid.step) > 1e-12 * phi.grid.step
        || phi.n_states != pi.n_states
        || phi.n_actions != pi.n_actions
    {
        return Err(MarkovizeError::GridMismatch(format!(
            "{} cells of {} over {}×{} against {} cells of {} over {}×{}",
            phi.grid.cells,
            phi.grid.step,
            phi.n_states,
            phi.n_actions,
            pi.grid.cells,
            pi.grid.step,
            pi.n_states,
            pi.n_actions
        )));
    }
    let (ns, na) = (phi.n_states, phi.n_actions);
    let both = phi.actions.as_ref().zip(pi.actions.as_ref());
    let mass_defects = phi.mass_defects();
    let mut horizon_index = None;
    for (k, &d) in mass_defects.iter().enumerate() {
        if abs(d) > NONEXPLOSIVE_TOL {
            break;
        }
        horizon_index = Some(k);
    }
    let (mut violation, mut state_eq, mut sa_eq, mut eq_nonexp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..phi.grid.points() {
        let mut here = 0.0f64;
        for z in 0..ns {
            let d = phi.prob(k, z) - pi.prob(k, z);
            violation = violation.max(d);
            state_eq = state_eq.max(abs(d));
            here = here.max(abs(d));
            if let Some((a_phi, a_pi)) = both {
                for a in 0..na {
                    let i = (k * ns + z) * na + a;
                    let d = a_phi.point[i] - a_pi.point[i];
                    violation = violation.max(d);
                    sa_eq = sa_eq.max(abs(d));
                    here = here.max(abs(d));
                }
            }
        }
        if horizon_index.is_some_and(|h| k <= h) {
            eq_nonexp = eq_nonexp.max(here);
        }
    }
    Ok(DominanceReport {
        violation_sup: violation,
        equality_sup: state_eq.max(sa_eq),
        state_equality_sup: state_eq,
        state_action_equality_sup: both.map(|_| sa_eq),
        mass_defect_max: mass_defects.iter().fold(0.0, |m, &d| m.max(d)),
        mass_defects,
        nonexplosive_until: horizon_index.map_or(0.0, |k| phi.grid.time(k)),
        equality_sup_nonexplosive: eq_nonexp,
    })
}

/// The exact pipeline for a finite-memory policy: its marginals, its Markovization on
/// the same grid, and the marginals of the Markovization.
#[derive(Debug, Clone)]
pub struct ExactMarkovization {
    pub original: MemoryMarginals,
    pub markov: Markovization,
    pub markov_curve: MarginalCurve,
}

impl ExactMarkovization {
    /// Both curves resampled by `factor` and compared.
    pub fn report(&self, factor: usize) -> Result<DominanceReport, MarkovizeError> {
        let phi = self.markov_curve.resample(factor)?;
        let pi = self.original.marginal.resample(factor)?;
        compare_marginals(&phi, &pi)
    }
}

/// Runs the exact pipeline on `grid`. Accuracy is governed by the grid step, since the
/// Markovized policy is constant on each cell.
pub fn markovize_finite_memory(
    model: &ModelSpec,
    policy: &FiniteMemoryPolicy,
    gamma: &[f64],
    grid: TimeGrid,
    opts: OdeOptions,
) -> Result<ExactMarkovization, MarkovizeError> {
    let original = finite_memory_marginals_with(model, policy, gamma, grid, opts)?;
    let markov = derive_markov_exact(model, &original.marginal)?;
    let markov_curve = markov_marginals_with(model, &markov.policy, gamma, grid, opts)?;
    Ok(ExactMarkovization {
        original,
        markov,
        markov_curve,
    })
}
