//! Sufficiency battery: finite-memory policies on random bounded-rate models against
//! their exact Markovizations, compared in marginals and in discounted costs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cells_in, ExperimentError};
use crate::catalog;
use crate::costs::{finite_horizon_cost, infinite_horizon_cost, truncation_horizon};
use crate::forward::{substeps_for, OdeOptions};
use crate::markovize::markovize_finite_memory;
use crate::model::ModelSpec;
use crate::num::abs;
use crate::policy::{FiniteMemoryPolicy, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    /// One random model per seed.
    pub model_seeds: Vec<u64>,
    pub n_states: usize,
    pub max_actions: usize,
    /// Reporting grid step and horizon of the marginal comparison.
    pub step: f64,
    pub horizon: f64,
    /// The pipeline runs on `step / refine`.
    pub refine: usize,
    /// Finite-horizon discount rates and horizons compared.
    pub alphas: Vec<f64>,
    pub horizons: Vec<f64>,
    /// Infinite-horizon comparison (jump costs included); skipped if `None`.
    pub infinite_alpha: Option<f64>,
    pub eps: f64,
    /// Adds each model's random time-homogeneous Markov policy as a memoryless entry.
    pub include_markov: bool,
    pub tol: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            model_seeds: (0..5).collect(),
            n_states: 4,
            max_actions: 3,
            step: 0.005,
            horizon: 4.0,
            refine: 10,
            alphas: vec![0.0, 0.5, 1.0],
            horizons: vec![1.0, 4.0],
            infinite_alpha: Some(1.0),
            eps: 1e-8,
            include_markov: false,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostGap {
    pub alpha: f64,
    /// `None` for the infinite horizon.
    pub horizon: Option<f64>,
    pub truncation_t: f64,
    pub v_pi: f64,
    pub v_phi: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub model_seed: u64,
    pub policy: String,
    pub violation_sup: f64,
    pub equality_sup: f64,
    pub state_equality_sup: f64,
    pub state_action_equality_sup: f64,
    pub mass_defect_max: f64,
    pub fallback_cells: usize,
    pub costs: Vec<CostGap>,
    pub cost_gap_sup: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub config: BatteryConfig,
    pub entries: Vec<BatteryEntry>,
    pub violation_sup: f64,
    pub equality_sup: f64,
    pub cost_gap_sup: f64,
    pub passed: bool,
}

fn policies(cfg: &BatteryConfig, model: &ModelSpec, seed: u64) -> Result<Vec<(String, FiniteMemoryPolicy)>, ExperimentError> {
    let mut out = catalog::battery_policies(model, seed);
    if cfg.include_markov {
        let phi = catalog::random_markov_policy(model, seed);
        out.push(("markov".into(), FiniteMemoryPolicy::memoryless(model, &phi)?));
    }
    Ok(out)
}

fn policies_per_model(cfg: &BatteryConfig) -> usize {
    3 + usize::from(cfg.include_markov)
}

/// Number of (model, policy) entries.
pub fn battery_size(cfg: &BatteryConfig) -> usize {
    cfg.model_seeds.len() * policies_per_model(cfg)
}

fn check(cfg: &BatteryConfig) -> Result<usize, ExperimentError> {
    if cfg.refine == 0 || cfg.n_states < 2 || cfg.max_actions == 0 || cfg.alphas.iter().any(|a| !a.is_finite()) {
        return Err(ExperimentError::BadConfig("battery sizes and rates must be positive".into()));
    }
    if cfg.horizons.iter().any(|&t| !(t > 0.0 && t <= cfg.horizon)) {
        return Err(ExperimentError::BadConfig("cost horizons must lie in (0, horizon]".into()));
    }
    cells_in(cfg.step, cfg.horizon)
}

/// Entry `index`, in model-major order.
pub fn run_battery_entry(cfg: &BatteryConfig, index: usize) -> Result<BatteryEntry, ExperimentError> {
    let report_cells = check(cfg)?;
    let per = policies_per_model(cfg);
    let seed = *cfg
        .model_seeds
        .get(index / per)
        .ok_or_else(|| ExperimentError::BadConfig("entry index out of range".into()))?;
    let model = catalog::random_model(seed, cfg.n_states, cfg.max_actions);
    let (name, policy) = policies(cfg, &model, seed)?.swap_remove(index % per);
    let gamma = vec![1.0 / cfg.n_states as f64; cfg.n_states];

    let fine_step = cfg.step / cfg.refine as f64;
    let mut reach = cfg.horizon;
    let infinite = match cfg.infinite_alpha {
        Some(alpha) => {
            let t = truncation_horizon(&model, model.costs(), alpha, cfg.eps)?;
            reach = reach.max(t);
            Some(alpha)
        }
        None => None,
    };
    // whole reporting cells, so the comparison window stays aligned
    let cells = libm::ceil(reach / cfg.step - 1e-9) as usize * cfg.refine;
    let grid = TimeGrid::new(fine_step, cells)?;
    let opts = OdeOptions {
        substeps: substeps_for(&model, fine_step),
    };
    let run = markovize_finite_memory(&model, &policy, &gamma, grid, opts)?;
    let pi = &run.original.marginal;
    let phi = &run.markov_curve;

    let window = report_cells * cfg.refine;
    let report = crate::markovize::compare_marginals(
        &phi.truncate(window)?.resample(cfg.refine)?,
        &pi.truncate(window)?.resample(cfg.refine)?,
    )?;

    let mut costs = Vec::new();
    for &alpha in &cfg.alphas {
        for &t in &cfg.horizons {
            let v_pi = finite_horizon_cost(pi, &model, model.costs(), alpha, t)?.value;
            let v_phi = finite_horizon_cost(phi, &model, model.costs(), alpha, t)?.value;
            costs.push(CostGap {
                alpha,
                horizon: Some(t),
                truncation_t: t,
                v_pi,
                v_phi,
                gap: v_phi - v_pi,
            });
        }
    }
    if let Some(alpha) = infinite {
        let a = infinite_horizon_cost(pi, &model, model.costs(), alpha, cfg.eps)?;
        let b = infinite_horizon_cost(phi, &model, model.costs(), alpha, cfg.eps)?;
        costs.push(CostGap {
            alpha,
            horizon: None,
            truncation_t: a.truncation_t,
            v_pi: a.value,
            v_phi: b.value,
            gap: b.value - a.value,
        });
    }
    let cost_gap_sup = costs.iter().fold(0.0f64, |m, c| m.max(abs(c.gap)));
    let passed = report.violation_sup <= cfg.tol && report.equality_sup <= cfg.tol && cost_gap_sup <= cfg.tol;
    Ok(BatteryEntry {
        model_seed: seed,
        policy: name,
        violation_sup: report.violation_sup,
        equality_sup: report.equality_sup,
        state_equality_sup: report.state_equality_sup,
        state_action_equality_sup: report.state_action_equality_sup.unwrap_or(0.0),
        mass_defect_max: report.mass_defect_max,
        fallback_cells: run.markov.fallback_cells(),
        costs,
        cost_gap_sup,
        passed,
    })
}

/// Aggregates entries produced by [`run_battery_entry`], in index order.
pub fn assemble_battery(cfg: &BatteryConfig, entries: Vec<BatteryEntry>) -> BatteryReport {
    let fold = |f: fn(&BatteryEntry) -> f64| entries.iter().fold(0.0f64, |m, e| m.max(f(e)));
    BatteryReport {
        config: cfg.clone(),
        violation_sup: fold(|e| e.violation_sup),
        equality_sup: fold(|e| e.equality_sup),
        cost_gap_sup: fold(|e| e.cost_gap_sup),
        passed: !entries.is_empty() && entries.iter().all(|e| e.passed),
        entries,
    }
}

/// Runs every entry on the calling thread.
pub fn run_sufficiency_battery(cfg: &BatteryConfig) -> Result<BatteryReport, ExperimentError> {
    let entries = (0..battery_size(cfg))
        .map(|i| run_battery_entry(cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_battery(cfg, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_entries_are_idempotent() {
        let cfg = BatteryConfig {
            model_seeds: vec![7],
            step: 0.01,
            horizon: 1.0,
            refine: 1,
            horizons: vec![1.0],
            infinite_alpha: None,
            include_markov: true,
            ..BatteryConfig::default()
        };
        let e = run_battery_entry(&cfg, 3).unwrap();
        assert_eq!(e.policy, "markov");
        assert_eq!(e.equality_sup, 0.0);
        assert_eq!(e.cost_gap_sup, 0.0);
        assert_eq!(battery_size(&cfg), 4);
    }
}
