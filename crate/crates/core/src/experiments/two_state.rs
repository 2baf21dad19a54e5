//! The two-state example where a history-dependent policy and its Markovization have
//! equal marginals but different expected discounted jump costs, because the jump costs
//! depend on the action.
//!
//! States `1`, `2`; in `1` only `b` (rate 2 to `2`); in `2`, `b` jumps to `1` at rate 2
//! and `c` at rate 1. Jump costs are `C(2,b,1) = 1`, `C(2,c,1) = 2`, `C(1,b,2) = 0`, so
//! every pure action pays the rate `2` in state `2`. Under a relaxed action `p` the jump
//! rate is `Σ p q` and the cost per jump `Σ p C`, so the expected cost rate becomes
//! `(1 + p(c)) (2 - p(c)) = 2 + p(b) p(c)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::catalog;
use crate::costs::{cell_discounts, finite_horizon_cost, PathCost};
use crate::forward::{substeps_for, MarginalCurve, OdeOptions};
use crate::markovize::{compare_marginals, markovize_finite_memory};
use crate::model::{CostStructure, ModelSpec, StateId};
use crate::num::{abs, ceil, ln, Moments};
use crate::policy::{MarkovPolicyGrid, Policy, TimeGrid};
use crate::runner::Runner;
use crate::simulator::{SimConfig, Simulation};

/// Largest expected jump-cost rate over relaxed actions, `max_p 2 + p(b) p(c)`.
const COST_RATE_SUP: f64 = 2.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStateConfig {
    pub alphas: Vec<f64>,
    pub step: f64,
    /// Truncation tolerance of the infinite horizon.
    pub eps: f64,
    /// Monte Carlo paths per policy; zero skips the cross-check.
    pub n_mc: usize,
    pub seed: u64,
    pub max_jumps: usize,
    /// Action-independent jump cost `C(2,1)` of the control variant.
    pub kappa: f64,
    /// Curve rows for plotting: every `curve_stride` grid points up to `curve_horizon`.
    pub curve_stride: usize,
    pub curve_horizon: f64,
    pub tol: f64,
}

impl Default for TwoStateConfig {
    fn default() -> Self {
        TwoStateConfig {
            alphas: vec![0.25, 0.5, 1.0, 2.0],
            step: 0.001,
            eps: 1e-9,
            n_mc: 100_000,
            seed: 20_240_601,
            max_jumps: 1_000_000,
            kappa: 1.0,
            curve_stride: 100,
            curve_horizon: 10.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    /// `|mean - exact| / se`
    pub z: f64,
    pub within_3se: bool,
}

impl McEstimate {
    fn new(m: &Moments, exact: f64) -> Self {
        let (mean, se) = (m.mean(), m.std_error());
        let z = if se > 0.0 { abs(mean - exact) / se } else if mean == exact { 0.0 } else { f64::INFINITY };
        McEstimate {
            mean,
            se,
            z,
            within_3se: z <= 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStateRow {
    pub alpha: f64,
    #[serde(rename = "truncation_T")]
    pub truncation_t: f64,
    pub v_pi: f64,
    /// `2 ∫ e^{-αt} P^π(t, 2) dt`, the closed form of `v_pi`.
    pub v_pi_formula: f64,
    pub v_phi: f64,
    pub gap: f64,
    /// `∫ e^{-αt} φ(b|2,t) φ(c|2,t) P^π(t, 2) dt`
    pub gap_formula: f64,
    pub gap_residual: f64,
    pub gap_positive: bool,
    pub mc_pi: Option<McEstimate>,
    pub mc_phi: Option<McEstimate>,
    /// Values with the action-independent jump cost `C(2,1) = kappa`.
    pub independent_v_pi: f64,
    pub independent_v_phi: f64,
    pub independent_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub pi_1: f64,
    pub pi_2: f64,
    pub phi_1: f64,
    pub phi_2: f64,
    /// `φ(b | 2, t)` on the cell starting at `t`.
    pub phi_b_given_2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStateReport {
    pub config: TwoStateConfig,
    pub marginal_equality_sup: f64,
    pub marginal_violation_sup: f64,
    pub rows: Vec<TwoStateRow>,
    pub curve: Vec<CurveRow>,
    pub passed: bool,
}

/// `C(z, a, y)`, zero off the listed pairs.
fn jump_cost(model: &ModelSpec, z: StateId, a: usize, y: StateId) -> f64 {
    match (model.state_name(z), model.action_name(a), model.state_name(y)) {
        ("2", "b", "1") => 1.0,
        ("2", "c", "1") => 2.0,
        _ => 0.0,
    }
}

/// Expected jump-cost rate `Σ_y (Σ_a p(a) C(z,a,y)) (Σ_a p(a) q̃(z,a,y))`.
fn relaxed_cost_rate(model: &ModelSpec, z: StateId, p: &[f64]) -> f64 {
    (0..model.n_states())
        .filter(|&y| y != z)
        .map(|y| {
            let cost: f64 = p.iter().enumerate().map(|(a, &w)| w * jump_cost(model, z, a, y)).sum();
            let rate: f64 = p.iter().enumerate().map(|(a, &w)| w * model.rate(z, a, y)).sum();
            cost * rate
        })
        .sum()
}

/// `∫_0^{K h} e^{-αt} Σ_z P(t, z) r(k, z) dt` from cell integrals, for `r` constant on
/// cells.
fn discounted(curve: &MarginalCurve, alpha: f64, cells: usize, r: impl Fn(usize, StateId) -> f64) -> f64 {
    let acts = curve.actions.as_ref().expect("state-action curve");
    let w = cell_discounts(curve.grid, alpha);
    let ns = curve.n_states;
    let mut total = 0.0;
    for k in 0..cells {
        for z in 0..ns {
            let mass = acts.cell_state[k * ns + z];
            if mass != 0.0 {
                total += w[k] * mass * r(k, z);
            }
        }
    }
    total
}

/// `∫ e^{-αt} Σ_{z,a} P(t,z,a) Σ_y C(z,a,y) q̃(z,a,y) dt`, exact for policies whose
/// decisions are pure on the product chain.
fn discounted_pure(curve: &MarginalCurve, model: &ModelSpec, alpha: f64, cells: usize) -> f64 {
    let acts = curve.actions.as_ref().expect("state-action curve");
    let w = cell_discounts(curve.grid, alpha);
    let (ns, na) = (curve.n_states, curve.n_actions);
    let mut total = 0.0;
    for k in 0..cells {
        for z in 0..ns {
            for &a in model.feasible(z) {
                let rate: f64 = model.targets(z, a).iter().map(|&(y, q)| q * jump_cost(model, z, a, y)).sum();
                total += w[k] * acts.cell_mass[(k * ns + z) * na + a] * rate;
            }
        }
    }
    total
}

pub fn run_example_two_state(cfg: &TwoStateConfig, runner: &dyn Runner) -> Result<TwoStateReport, ExperimentError> {
    if cfg.alphas.is_empty() || cfg.alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(ExperimentError::BadConfig("discount rates must be positive".into()));
    }
    if !(cfg.step > 0.0 && cfg.eps > 0.0) || cfg.curve_stride == 0 {
        return Err(ExperimentError::BadConfig("step, eps and curve stride must be positive".into()));
    }
    let model = catalog::figure_two();
    let pi = catalog::parity_policy(&model);
    let (one, two) = (model.state_index("1").unwrap(), model.state_index("2").unwrap());
    let (b, c) = (model.action_index("b").unwrap(), model.action_index("c").unwrap());
    let gamma = crate::model::dirac_distribution(model.n_states(), two);

    // truncation cells per discount rate: e^{-αT} sup / α <= eps
    let cells_for = |alpha: f64| ceil(ln(COST_RATE_SUP / (alpha * cfg.eps)) / alpha / cfg.step - 1e-9).max(1.0) as usize;
    let total_cells = cfg.alphas.iter().map(|&a| cells_for(a)).max().unwrap();
    let grid = TimeGrid::new(cfg.step, total_cells)?;
    let opts = OdeOptions {
        substeps: substeps_for(&model, cfg.step),
    };
    let run = markovize_finite_memory(&model, &pi, &gamma, grid, opts)?;
    let pi_curve = &run.original.marginal;
    let phi_curve = &run.markov_curve;
    let phi: &MarkovPolicyGrid = &run.markov.policy;
    let marginals = compare_marginals(phi_curve, pi_curve)?;

    let independent = catalog::figure_two_with_jump_costs(0.0, cfg.kappa);

    let mut rows = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let cells = cells_for(alpha);
        let t = grid.time(cells);
        let v_pi = discounted_pure(pi_curve, &model, alpha, cells);
        let v_pi_formula = discounted(pi_curve, alpha, cells, |_, z| if z == two { 2.0 } else { 0.0 });
        let v_phi = discounted(phi_curve, alpha, cells, |k, z| relaxed_cost_rate(&model, z, phi.cell_action(k, z)));
        let gap_formula = discounted(pi_curve, alpha, cells, |k, z| {
            if z == two {
                let p = phi.cell_action(k, two);
                p[b] * p[c]
            } else {
                0.0
            }
        });
        let gap = v_phi - v_pi;
        let ind_pi = finite_horizon_cost(pi_curve, &independent, independent.costs(), alpha, t)?.value;
        let ind_phi = finite_horizon_cost(phi_curve, &independent, independent.costs(), alpha, t)?.value;
        rows.push(TwoStateRow {
            alpha,
            truncation_t: t,
            v_pi,
            v_pi_formula,
            v_phi,
            gap,
            gap_formula,
            gap_residual: abs(gap - gap_formula),
            gap_positive: gap > 0.0,
            mc_pi: None,
            mc_phi: None,
            independent_v_pi: ind_pi,
            independent_v_phi: ind_phi,
            independent_gap: ind_phi - ind_pi,
            passed: false,
        });
    }

    if cfg.n_mc > 0 {
        let sim_cfg = SimConfig {
            horizon: grid.horizon(),
            max_jumps: cfg.max_jumps,
            trajectories: cfg.n_mc,
            seed: cfg.seed,
        };
        let hook = |z: StateId, p: &[f64], y: StateId| -> f64 {
            p.iter().enumerate().map(|(a, &w)| w * jump_cost(&model, z, a, y)).sum()
        };
        let zero = CostStructure::zero(model.n_states(), model.n_actions());
        let pi_policy = Policy::FiniteMemory(pi.clone());
        let phi_policy = Policy::Markov(phi.clone());
        for (which, policy) in [(0, &pi_policy), (1, &phi_policy)] {
            let sim = Simulation::new(&model, policy, &gamma, sim_cfg)?;
            let evaluators = rows
                .iter()
                .map(|r| Ok(PathCost::new(&model, policy, &zero, r.alpha, r.truncation_t)?.with_jump_hook(&hook)))
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            let width = rows.len();
            let values = runner.run(cfg.n_mc, width, &|i, out| match sim.trajectory(i) {
                Ok(traj) => {
                    for (slot, e) in out.iter_mut().zip(&evaluators) {
                        *slot = e.evaluate(&traj);
                    }
                }
                Err(_) => out.fill(f64::NAN),
            });
            if values.iter().any(|v| v.is_nan()) {
                // surface the first failure
                for i in 0..cfg.n_mc {
                    sim.trajectory(i)?;
                }
            }
            for (j, row) in rows.iter_mut().enumerate() {
                let mut m = Moments::default();
                for i in 0..cfg.n_mc {
                    m.push(values[i * width + j]);
                }
                if which == 0 {
                    row.mc_pi = Some(McEstimate::new(&m, row.v_pi));
                } else {
                    row.mc_phi = Some(McEstimate::new(&m, row.v_phi));
                }
            }
        }
    }

    for row in &mut rows {
        let mc_ok = [row.mc_pi, row.mc_phi].iter().all(|e| e.is_none_or(|e| e.within_3se));
        row.passed = row.gap_positive
            && row.gap_residual <= cfg.tol
            && abs(row.independent_gap) <= cfg.tol
            && abs(row.v_pi - row.v_pi_formula) <= cfg.tol
            && mc_ok;
    }

    let stride_end = grid.index_of(cfg.curve_horizon.min(grid.horizon())).unwrap_or(grid.cells);
    let curve = (0..=stride_end)
        .step_by(cfg.curve_stride)
        .map(|k| CurveRow {
            t: grid.time(k),
            pi_1: pi_curve.prob(k, one),
            pi_2: pi_curve.prob(k, two),
            phi_1: phi_curve.prob(k, one),
            phi_2: phi_curve.prob(k, two),
            phi_b_given_2: phi.cell_action(k.min(grid.cells - 1), two)[b],
        })
        .collect();

    let passed = marginals.equality_sup <= cfg.tol
        && marginals.violation_sup <= cfg.tol
        && rows.iter().all(|r| r.passed);
    Ok(TwoStateReport {
        config: cfg.clone(),
        marginal_equality_sup: marginals.equality_sup,
        marginal_violation_sup: marginals.violation_sup,
        rows,
        curve,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Serial;

    #[test]
    fn relaxed_rate_is_two_plus_product() {
        let m = catalog::figure_two();
        for pc in [0.0, 0.3, 0.5, 1.0] {
            let r = relaxed_cost_rate(&m, 1, &[1.0 - pc, pc]);
            assert!(abs(r - (2.0 + (1.0 - pc) * pc)) < 1e-15);
        }
        assert_eq!(relaxed_cost_rate(&m, 0, &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn exact_gap_is_positive() {
        let cfg = TwoStateConfig {
            alphas: vec![1.0],
            step: 0.002,
            eps: 1e-8,
            n_mc: 0,
            ..TwoStateConfig::default()
        };
        let r = run_example_two_state(&cfg, &Serial).unwrap();
        let row = &r.rows[0];
        assert!(row.gap > 1e-3, "{}", row.gap);
        assert!(row.gap_residual < 1e-6);
        assert!(abs(row.independent_gap) < 1e-6);
        assert!(r.marginal_equality_sup < 1e-6);
    }
}
