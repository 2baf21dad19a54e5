//! Explosion of the pure-birth chain with rates `(n+1)^2`, seen through truncations of
//! increasing depth.
//!
//! The truncation at depth `d` sends the last birth to a cemetery state, so the mass
//! defect at `t` is `P(τ_d <= t)` with `τ_d` the sum of `d` independent exponentials of
//! rates `1, 4, …, d^2`. As `d` grows, `τ_d` increases to the explosion time
//! `t_∞`, whose mean is `Σ_{n≥0} (n+1)^{-2} = π^2/6`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::catalog;
use crate::forward::{
    feller_series, forward_ode_with, mass_defect, substeps_for, OdeOptions, QFunction, SeriesOptions,
};
use crate::num::{abs, Moments};
use crate::policy::{MarkovPolicyGrid, Policy, TimeGrid};
use crate::runner::Runner;
use crate::simulator::{SimConfig, Simulation};

pub const PI_SQUARED_OVER_SIX: f64 = core::f64::consts::PI * core::f64::consts::PI / 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplosionConfig {
    pub depths: Vec<usize>,
    /// Time at which the mass defect is reported.
    pub t: f64,
    pub step: f64,
    /// Also run the series solver and report its distance to the ODE.
    pub series: bool,
    /// Explosion times sampled at the deepest truncation; zero skips the simulation.
    pub n_mc: usize,
    pub seed: u64,
    /// Simulation horizon; paths that have not exploded by then are counted as censored.
    pub mc_horizon: f64,
    pub tol: f64,
}

impl Default for ExplosionConfig {
    fn default() -> Self {
        ExplosionConfig {
            depths: vec![10, 50, 200],
            t: 2.0,
            step: 0.01,
            series: true,
            n_mc: 10_000,
            seed: 7_001,
            mc_horizon: 1_000.0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub mass_defect: f64,
    pub substeps: usize,
    /// `sup |series - ODE|` over grid points and states.
    pub series_ode_sup: Option<f64>,
    pub series_terms: Option<usize>,
    pub series_monotone: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplosionTimeEstimate {
    pub depth: usize,
    pub trajectories: usize,
    pub censored: usize,
    pub mean: f64,
    pub se: f64,
    /// `Σ_{n<depth} (n+1)^{-2}`, the mean at this depth.
    pub truncated_mean: f64,
    pub oracle: f64,
    /// `|mean - oracle| / se`
    pub z: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionReport {
    pub config: ExplosionConfig,
    pub rows: Vec<DepthRow>,
    /// Defect at `t = 0`, for the deepest truncation.
    pub defect_at_zero: f64,
    /// Defects never grow with depth (within `tol`).
    pub nonincreasing_in_depth: bool,
    /// Defects never shrink with depth (within `tol`).
    pub nondecreasing_in_depth: bool,
    /// Every depth of at least 50 has a defect above one half.
    pub defect_above_half: bool,
    pub mc: Option<ExplosionTimeEstimate>,
    pub passed: bool,
}

/// `Σ_{n<depth} (n+1)^{-2}`.
pub fn truncated_mean_explosion_time(depth: usize) -> f64 {
    (1..=depth).map(|n| 1.0 / (n * n) as f64).sum()
}

pub fn run_explosion_demo(cfg: &ExplosionConfig, runner: &dyn Runner) -> Result<ExplosionReport, ExperimentError> {
    if cfg.depths.is_empty() || cfg.depths.contains(&0) || cfg.depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::BadConfig("depths must be positive and increasing".into()));
    }
    let cells = super::cells_in(cfg.step, cfg.t)?;
    let grid = TimeGrid::new(cfg.step, cells)?;
    let mut rows = Vec::with_capacity(cfg.depths.len());
    let mut defect_at_zero = 0.0;
    for &depth in &cfg.depths {
        let model = catalog::pure_birth(depth);
        let policy = MarkovPolicyGrid::deterministic(&model, &vec![0; depth + 1])?;
        let q = QFunction::new(&model, &policy)?;
        let substeps = substeps_for(&model, cfg.step);
        let gamma = crate::model::dirac_distribution(depth + 1, 0);
        let curve = forward_ode_with(&q, &gamma, grid, OdeOptions { substeps })?;
        defect_at_zero = mass_defect(&curve, 0.0)?;
        let (mut sup, mut terms, mut monotone) = (None, None, None);
        if cfg.series {
            let opts = SeriesOptions {
                substeps,
                n_max: depth + 2,
                ..SeriesOptions::default()
            };
            let s = feller_series(&q, &gamma, grid, opts)?;
            let d = s
                .curve
                .probs
                .iter()
                .zip(&curve.probs)
                .fold(0.0f64, |m, (a, b)| m.max(abs(a - b)));
            sup = Some(d);
            terms = Some(s.terms);
            monotone = Some(s.term_min >= 0.0);
        }
        rows.push(DepthRow {
            depth,
            mass_defect: mass_defect(&curve, cfg.t)?,
            substeps,
            series_ode_sup: sup,
            series_terms: terms,
            series_monotone: monotone,
        });
    }
    let pairs = || rows.windows(2);
    let nonincreasing = pairs().all(|w| w[1].mass_defect <= w[0].mass_defect + cfg.tol);
    let nondecreasing = pairs().all(|w| w[0].mass_defect <= w[1].mass_defect + cfg.tol);
    let defect_above_half = rows.iter().filter(|r| r.depth >= 50).all(|r| r.mass_defect > 0.5);

    let mc = if cfg.n_mc > 0 {
        let depth = *cfg.depths.last().unwrap();
        let model = catalog::pure_birth(depth);
        let policy = Policy::Markov(MarkovPolicyGrid::deterministic(&model, &vec![0; depth + 1])?);
        let gamma = crate::model::dirac_distribution(depth + 1, 0);
        let sim = Simulation::new(
            &model,
            &policy,
            &gamma,
            SimConfig {
                horizon: cfg.mc_horizon,
                max_jumps: depth + 1,
                trajectories: cfg.n_mc,
                seed: cfg.seed,
            },
        )?;
        let values = runner.run(cfg.n_mc, 1, &|i, out| {
            out[0] = match sim.trajectory(i) {
                Ok(traj) => traj.explosion_time().unwrap_or(f64::INFINITY),
                Err(_) => f64::NAN,
            }
        });
        if values.iter().any(|v| v.is_nan()) {
            for i in 0..cfg.n_mc {
                sim.trajectory(i)?;
            }
        }
        let mut m = Moments::default();
        let mut censored = 0;
        for &v in &values {
            if v.is_finite() {
                m.push(v);
            } else {
                censored += 1;
            }
        }
        let (mean, se) = (m.mean(), m.std_error());
        let z = abs(mean - PI_SQUARED_OVER_SIX) / se;
        Some(ExplosionTimeEstimate {
            depth,
            trajectories: cfg.n_mc,
            censored,
            mean,
            se,
            truncated_mean: truncated_mean_explosion_time(depth),
            oracle: PI_SQUARED_OVER_SIX,
            z,
            within_3se: censored == 0 && z <= 3.0,
        })
    } else {
        None
    };

    let passed = defect_at_zero == 0.0
        && nonincreasing
        && defect_above_half
        && mc.is_none_or(|m| m.within_3se);
    Ok(ExplosionReport {
        config: cfg.clone(),
        rows,
        defect_at_zero,
        nonincreasing_in_depth: nonincreasing,
        nondecreasing_in_depth: nondecreasing,
        defect_above_half,
        mc,
        passed,
    })
}
