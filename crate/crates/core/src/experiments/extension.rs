//! Initial distributions as an extra entry state.
//!
//! The extended model has an entry state `x'` whose action `a'` jumps into `X` with
//! intensity `γ`, and a freeze action `a''` that stops every state. Under `σ̃` the chain
//! waits in `x'` with `a'` and keeps `X` frozen until `u`; from `u` on it freezes `x'`
//! and runs `σ` on `X`, with `σ`'s clock and memory starting at `u`. At `t + u` the
//! marginals on `X` are the marginals of `σ` from `γ` at `t`, scaled by the mass
//! `1 - e^{-u}` that left `x'`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::catalog;
use crate::forward::{finite_memory_marginals_from, finite_memory_marginals_with, markov_marginals_with, substeps_for, OdeOptions};
use crate::model::{extend_with_initial_distribution, ModelSpec, RelaxedAction};
use crate::num::{abs, ceil, exp};
use crate::policy::{FiniteMemoryPolicy, MarkovPolicyGrid, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    /// `sup |P_{x'}^{σ̃}(t+u, z, a) - (1 - e^{-u}) P_γ^σ(t, z, a)|` over grid points,
    /// states and actions (state marginals included).
    pub residual: f64,
    /// Mass left in `x'` at `u`, against `e^{-u}`.
    pub entry_mass: f64,
    pub entry_mass_error: f64,
}

/// Compares both sides on `[0, horizon]` with grid step `step`.
pub fn run_extension_check(
    model: &ModelSpec,
    gamma: &[f64],
    sigma: &FiniteMemoryPolicy,
    u: f64,
    step: f64,
    horizon: f64,
) -> Result<ExtensionResult, ExperimentError> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(ExperimentError::BadConfig("u must be positive".into()));
    }
    let cells = super::cells_in(step, horizon)?;
    let grid = TimeGrid::new(step, cells)?;
    let ext = extend_with_initial_distribution(model, gamma)?;
    let em = &ext.model;
    let (ns, na) = (model.n_states(), model.n_actions());
    let (ns2, na2) = (em.n_states(), em.n_actions());
    let entry = ext.entry_state;

    // phase 1 on [0, u]: x' enters with a', X frozen
    let phase1_cells = ceil(u / step).max(1.0) as usize;
    let phase1_grid = TimeGrid::new(u / phase1_cells as f64, phase1_cells)?;
    let wait: Vec<usize> = (0..ns2)
        .map(|z| if z == entry { ext.entry_action } else { ext.freeze_action })
        .collect();
    let waiting = MarkovPolicyGrid::deterministic(em, &wait)?;
    let start = crate::model::dirac_distribution(ns2, entry);
    let opts1 = OdeOptions {
        substeps: substeps_for(em, phase1_grid.step),
    };
    let phase1 = markov_marginals_with(em, &waiting, &start, phase1_grid, opts1)?;
    let at_u = phase1.probs_at(phase1_grid.cells).to_vec();
    let entry_mass = at_u[entry];

    // phase 2 from u: x' frozen, σ on X
    let pad = |p: &[f64]| {
        let mut w = vec![0.0; na2];
        w[..na].copy_from_slice(p);
        RelaxedAction::new(w).expect("padded decision")
    };
    let tilde = FiniteMemoryPolicy::from_fn(
        em,
        sigma.memory_names().to_vec(),
        sigma.initial_memory(),
        sigma.grid(),
        |m, from, to| if from < ns && to < ns { sigma.update(m, from, to) } else { m },
        |k, z, m| {
            if z == entry {
                RelaxedAction::dirac(na2, ext.freeze_action)
            } else {
                pad(sigma.cell_decision(k, z, m))
            }
        },
    )?;
    let mut lifted = vec![0.0; ns2 * sigma.n_memory()];
    for (z, &p) in at_u.iter().enumerate() {
        lifted[sigma.initial_memory() * ns2 + z] = p;
    }
    let opts = OdeOptions {
        substeps: substeps_for(model, step),
    };
    let extended = finite_memory_marginals_from(em, &tilde, &lifted, grid, opts)?.marginal;
    let base = finite_memory_marginals_with(model, sigma, gamma, grid, opts)?.marginal;

    let scale = 1.0 - exp(-u);
    let (ea, ba) = (extended.actions.as_ref().unwrap(), base.actions.as_ref().unwrap());
    let mut residual = 0.0f64;
    for k in 0..grid.points() {
        for z in 0..ns {
            residual = residual.max(abs(extended.prob(k, z) - scale * base.prob(k, z)));
            for a in 0..na {
                let d = ea.point[(k * ns2 + z) * na2 + a] - scale * ba.point[(k * ns + z) * na + a];
                residual = residual.max(abs(d));
            }
        }
    }
    Ok(ExtensionResult {
        residual,
        entry_mass,
        entry_mass_error: abs(entry_mass - exp(-u)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtensionConfig {
    pub model_seeds: Vec<u64>,
    pub n_states: usize,
    pub max_actions: usize,
    pub u: f64,
    pub step: f64,
    pub horizon: f64,
    pub tol: f64,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            model_seeds: (0..5).collect(),
            n_states: 4,
            max_actions: 3,
            u: core::f64::consts::LN_2,
            step: 0.005,
            horizon: 4.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionRow {
    pub model_seed: u64,
    pub policy: alloc::string::String,
    #[serde(flatten)]
    pub result: ExtensionResult,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub config: ExtensionConfig,
    pub rows: Vec<ExtensionRow>,
    pub residual_sup: f64,
    pub passed: bool,
}

/// [`run_extension_check`] for every battery policy on every battery model, from the
/// uniform initial law.
pub fn run_extension_battery(cfg: &ExtensionConfig) -> Result<ExtensionReport, ExperimentError> {
    let mut rows = Vec::new();
    for &seed in &cfg.model_seeds {
        let model = catalog::random_model(seed, cfg.n_states, cfg.max_actions);
        let gamma = vec![1.0 / cfg.n_states as f64; cfg.n_states];
        for (name, sigma) in catalog::battery_policies(&model, seed) {
            let result = run_extension_check(&model, &gamma, &sigma, cfg.u, cfg.step, cfg.horizon)?;
            rows.push(ExtensionRow {
                model_seed: seed,
                policy: name,
                passed: result.residual <= cfg.tol && result.entry_mass_error <= cfg.tol,
                result,
            });
        }
    }
    let residual_sup = rows.iter().fold(0.0f64, |m, r| m.max(r.result.residual));
    Ok(ExtensionReport {
        config: cfg.clone(),
        passed: !rows.is_empty() && rows.iter().all(|r| r.passed),
        rows,
        residual_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dirac_distribution;

    #[test]
    fn dirac_start_matches_direct_solve() {
        let m = catalog::figure_two();
        let sigma = catalog::parity_policy(&m);
        let r = run_extension_check(&m, &dirac_distribution(2, 1), &sigma, 0.3, 0.01, 2.0).unwrap();
        assert!(r.residual < 1e-9, "{}", r.residual);
        assert!(r.entry_mass_error < 1e-9);
    }
}
