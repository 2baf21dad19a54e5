//! Event-driven sampling of the controlled jump process.
//!
//! For grid policies (Markov and finite-memory) the exit intensity between jumps is
//! piecewise constant, and sojourn times are drawn exactly by inverting the integrated
//! intensity. Callback policies are sampled by thinning against `q̄(z)`.
//!
//! Each trajectory uses its own random stream keyed by `(seed, trajectory index)`.
//! Explosion is not simulated past: a path that enters a cemetery state, or hits the
//! jump cap with collapsing sojourn times, is flagged [`TrajectoryStatus::ExplodedProxy`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, ModelSpec, StateId, StateSet};
use crate::num::{sqrt, Moments};
use crate::paths::{GridView, Profile, Weight};
use crate::policy::{check_initial, History, Jump, Policy, PolicyError, TimeGrid};
use crate::rng::StreamRng;
use crate::runner::Runner;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
    #[error("ZERO_EXIT: no jump is possible from state {0} under this relaxed action")]
    ZeroExit(String),
    #[error("UNSUPPORTED_POLICY: {0}")]
    UnsupportedPolicy(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::BadConfig(_) => "BAD_CONFIG",
            SimError::ZeroExit(_) => "ZERO_EXIT",
            SimError::UnsupportedPolicy(_) => "UNSUPPORTED_POLICY",
            SimError::Policy(e) => e.code(),
            SimError::Model(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrajectoryStatus {
    /// The horizon was reached.
    Completed,
    /// The jump cap was hit before the horizon.
    TruncatedJumps,
    /// A cemetery state was entered, or the jump cap was hit with collapsing sojourns.
    ExplodedProxy,
}

impl TrajectoryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryStatus::Completed => "COMPLETED",
            TrajectoryStatus::TruncatedJumps => "TRUNCATED_JUMPS",
            TrajectoryStatus::ExplodedProxy => "EXPLODED_PROXY",
        }
    }
}

/// A sampled path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: History,
    pub status: TrajectoryStatus,
    pub horizon: f64,
}

impl Trajectory {
    pub fn n_jumps(&self) -> usize {
        self.path.jumps.len()
    }

    /// Time up to which the path is known: the horizon for completed paths, otherwise
    /// the last jump time.
    pub fn observed_until(&self) -> f64 {
        match self.status {
            TrajectoryStatus::Completed => self.horizon,
            _ => self.path.last_jump_time(),
        }
    }

    /// Proxy for the explosion time `t_∞`.
    pub fn explosion_time(&self) -> Option<f64> {
        (self.status == TrajectoryStatus::ExplodedProxy).then(|| self.path.last_jump_time())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub max_jumps: usize,
    pub trajectories: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0) || self.horizon.is_nan() {
            return Err(SimError::BadConfig(format!("horizon {}", self.horizon)));
        }
        if self.max_jumps == 0 {
            return Err(SimError::BadConfig("max_jumps must be at least 1".into()));
        }
        if self.trajectories == 0 {
            return Err(SimError::BadConfig("need at least one trajectory".into()));
        }
        Ok(())
    }
}

/// Draws `y != z` with probability `q(z, p, {y}) / q(z, p)`.
pub fn sample_destination(
    rng: &mut StreamRng,
    model: &ModelSpec,
    z: StateId,
    p: &[f64],
) -> Result<StateId, SimError> {
    model.check_support(z, p)?;
    destination_unchecked(rng, model, z, p)
}

fn destination_unchecked(
    rng: &mut StreamRng,
    model: &ModelSpec,
    z: StateId,
    p: &[f64],
) -> Result<StateId, SimError> {
    let weights: Vec<f64> = (0..model.n_states())
        .map(|y| if y == z { 0.0 } else { model.mixed_target_rate(z, p, y) })
        .collect();
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(SimError::ZeroExit(model.state_name(z).into()));
    }
    Ok(rng.categorical(&weights))
}

/// Draws the sojourn time in the current state of `history`, started at `t0`.
///
/// Returns `None` when no jump happens before `horizon` (censoring).
pub fn sample_sojourn(
    rng: &mut StreamRng,
    model: &ModelSpec,
    policy: &Policy,
    history: &History,
    t0: f64,
    horizon: f64,
) -> Result<Option<f64>, SimError> {
    let z = history.current_state();
    match GridView::of(policy) {
        Some(view) => {
            let m = match policy {
                Policy::FiniteMemory(p) => p.memory_before(history, f64::INFINITY),
                _ => 0,
            };
            let grid = view.grid();
            let values = (0..grid.cells)
                .map(|k| model.mixed_exit_rate(z, view.cell_decision(k, z, m)))
                .collect::<Result<Vec<_>, _>>()?;
            let profile = Profile::new(grid, Weight::Unit, values);
            let target = profile.integral_to(t0) + rng.exponential();
            Ok(profile
                .inverse(target)
                .map(|(t, _)| t)
                .filter(|&t| t <= horizon)
                .map(|t| t - t0))
        }
        None => {
            let Policy::General(g) = policy else {
                unreachable!()
            };
            Ok(thinning(rng, model, g.as_ref(), history, t0, horizon)?.map(|(t, _)| t - t0))
        }
    }
}

fn thinning(
    rng: &mut StreamRng,
    model: &ModelSpec,
    policy: &dyn crate::policy::GeneralPolicy,
    history: &History,
    t0: f64,
    horizon: f64,
) -> Result<Option<(f64, Vec<f64>)>, SimError> {
    let z = history.current_state();
    let bound = model.max_exit_rate(z);
    if bound <= 0.0 {
        return Ok(None);
    }
    let mut t = t0;
    loop {
        t += rng.exponential() / bound;
        if t > horizon {
            return Ok(None);
        }
        let p = policy.decide(history, t).into_weights();
        model
            .check_support(z, &p)
            .map_err(|_| PolicyError::UnsupportedAction {
                state: model.state_name(z).into(),
                detail: format!("callback decision at t = {t}"),
            })?;
        let rate = model.mixed_exit_rate_unchecked(z, &p);
        if rng.uniform() * bound <= rate {
            return Ok(Some((t, p)));
        }
    }
}

enum Driver<'a> {
    Grid {
        view: GridView<'a>,
        /// exit-rate profile per `z * n_memory + m`
        exit: Vec<Profile>,
    },
    General(&'a dyn crate::policy::GeneralPolicy),
}

/// A prepared simulation: policy tables are compiled once and trajectories are then
/// produced independently by index.
pub struct Simulation<'a> {
    model: &'a ModelSpec,
    gamma: Vec<f64>,
    cfg: SimConfig,
    driver: Driver<'a>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        model: &'a ModelSpec,
        policy: &'a Policy,
        gamma: &[f64],
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        check_initial(model, gamma)?;
        policy.check_model(model)?;
        let driver = match policy {
            Policy::General(g) => Driver::General(g.as_ref()),
            _ => {
                let view = GridView::of(policy).expect("grid policy");
                let exit = view.profiles(model, Weight::Unit, |z, p| {
                    model.mixed_exit_rate_unchecked(z, p)
                });
                Driver::Grid { view, exit }
            }
        };
        Ok(Simulation {
            model,
            gamma: gamma.to_vec(),
            cfg,
            driver,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    /// Trajectory number `index`; a pure function of `(seed, index)`.
    pub fn trajectory(&self, index: usize) -> Result<Trajectory, SimError> {
        let mut rng = StreamRng::new(self.cfg.seed, index as u64);
        let z0 = rng.categorical(&self.gamma);
        let mut path = History::new(z0);
        let horizon = self.cfg.horizon;
        let status = match &self.driver {
            Driver::Grid { view, exit } => {
                self.run_grid(&mut rng, view, exit, &mut path)?
            }
            Driver::General(g) => self.run_general(&mut rng, *g, &mut path)?,
        };
        Ok(Trajectory {
            path,
            status,
            horizon,
        })
    }

    fn run_grid(
        &self,
        rng: &mut StreamRng,
        view: &GridView<'a>,
        exit: &[Profile],
        path: &mut History,
    ) -> Result<TrajectoryStatus, SimError> {
        let nm = view.n_memory();
        let mut m = view.initial_memory();
        let mut z = path.initial;
        let mut t = 0.0;
        loop {
            let profile = &exit[z * nm + m];
            let target = profile.integral_to(t) + rng.exponential();
            let next = profile.inverse(target).filter(|&(tn, _)| tn <= self.cfg.horizon);
            let Some((tn, cell)) = next else {
                return Ok(TrajectoryStatus::Completed);
            };
            if path.jumps.len() == self.cfg.max_jumps {
                return Ok(cap_status(path));
            }
            let tn = if tn > t { tn } else { next_after(t) };
            let p = view.cell_decision(cell, z, m);
            let y = destination_unchecked(rng, self.model, z, p)?;
            path.jumps.push(Jump { time: tn, state: y });
            m = view.update(m, z, y);
            z = y;
            t = tn;
            if self.model.is_cemetery(y) {
                return Ok(TrajectoryStatus::ExplodedProxy);
            }
        }
    }

    fn run_general(
        &self,
        rng: &mut StreamRng,
        policy: &dyn crate::policy::GeneralPolicy,
        path: &mut History,
    ) -> Result<TrajectoryStatus, SimError> {
        loop {
            let t = path.last_jump_time();
            let Some((tn, p)) = thinning(rng, self.model, policy, path, t, self.cfg.horizon)?
            else {
                return Ok(TrajectoryStatus::Completed);
            };
            if path.jumps.len() == self.cfg.max_jumps {
                return Ok(cap_status(path));
            }
            let z = path.current_state();
            let y = destination_unchecked(rng, self.model, z, &p)?;
            path.jumps.push(Jump { time: tn, state: y });
            if self.model.is_cemetery(y) {
                return Ok(TrajectoryStatus::ExplodedProxy);
            }
        }
    }
}

fn next_after(t: f64) -> f64 {
    f64::from_bits(t.to_bits() + 1)
}

/// Classifies a path that hit the jump cap: collapsing sojourns (the mean of the last
/// quarter below a quarter of the mean of the first quarter) suggest explosion.
fn cap_status(path: &History) -> TrajectoryStatus {
    let n = path.jumps.len();
    let q = (n / 4).max(1);
    let mut sojourns = Vec::with_capacity(n);
    let mut prev = 0.0;
    for j in &path.jumps {
        sojourns.push(j.time - prev);
        prev = j.time;
    }
    let head: f64 = sojourns[..q].iter().sum::<f64>() / q as f64;
    let tail: f64 = sojourns[n - q..].iter().sum::<f64>() / q as f64;
    if n >= 4 && tail < 0.25 * head {
        TrajectoryStatus::ExplodedProxy
    } else {
        TrajectoryStatus::TruncatedJumps
    }
}

/// Simulates `cfg.trajectories` independent trajectories on the calling thread.
pub fn simulate(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    cfg: SimConfig,
) -> Result<Vec<Trajectory>, SimError> {
    let sim = Simulation::new(model, policy, gamma, cfg)?;
    (0..cfg.trajectories).map(|i| sim.trajectory(i)).collect()
}

/// Number of jumps into `set` at times `<= t`.
pub fn count_into(traj: &Trajectory, set: &StateSet, t: f64) -> usize {
    traj.path
        .transitions()
        .filter(|&(_, to, time)| time <= t && set.contains(to))
        .count()
}

/// Number of jumps out of `set` at times `<= t`.
pub fn count_out_of(traj: &Trajectory, set: &StateSet, t: f64) -> usize {
    traj.path
        .transitions()
        .filter(|&(from, _, time)| time <= t && set.contains(from))
        .count()
}

/// `∫ f(ξ_s, π_s) w(s) ds` along paths of a grid policy, with `f` fixed at construction.
///
/// The integrand is piecewise constant in time between jumps, so integrals are exact.
/// Paths are integrated up to [`Trajectory::observed_until`].
pub struct PathIntegral<'a> {
    view: GridView<'a>,
    profiles: Vec<Profile>,
}

impl<'a> PathIntegral<'a> {
    pub fn new(
        model: &ModelSpec,
        policy: &'a Policy,
        weight: Weight,
        f: impl Fn(StateId, &[f64]) -> f64,
    ) -> Result<Self, SimError> {
        policy.check_model(model)?;
        let view = GridView::of(policy).ok_or_else(|| {
            SimError::UnsupportedPolicy("path integrals need a Markov or finite-memory policy".into())
        })?;
        let profiles = view.profiles(model, weight, f);
        Ok(PathIntegral { view, profiles })
    }

    /// Integral over `[0, min(t, observed_until)]`.
    pub fn integrate(&self, traj: &Trajectory, t: f64) -> f64 {
        let end = t.min(traj.observed_until());
        let nm = self.view.n_memory();
        let mut m = self.view.initial_memory();
        let mut z = traj.path.initial;
        let mut start = 0.0;
        let mut total = 0.0;
        for j in &traj.path.jumps {
            if start >= end {
                break;
            }
            total += self.profiles[z * nm + m].integral(start, j.time.min(end));
            m = self.view.update(m, z, j.state);
            z = j.state;
            start = j.time;
        }
        if start < end {
            total += self.profiles[z * nm + m].integral(start, end);
        }
        total
    }
}

/// Integrated intensity of jumps into `set`: `∫_0^t q(ξ_s, π_s, Z \ {ξ_s}) ds`.
pub fn integrated_intensity_into(
    traj: &Trajectory,
    model: &ModelSpec,
    policy: &Policy,
    set: &StateSet,
    t: f64,
) -> Result<f64, SimError> {
    Ok(into_intensity(model, policy, set)?.integrate(traj, t))
}

/// Integrated intensity of jumps out of `set`: `∫_0^t q(ξ_s, π_s) 1{ξ_s ∈ Z} ds`.
pub fn integrated_intensity_out_of(
    traj: &Trajectory,
    model: &ModelSpec,
    policy: &Policy,
    set: &StateSet,
    t: f64,
) -> Result<f64, SimError> {
    Ok(out_intensity(model, policy, set)?.integrate(traj, t))
}

pub fn into_intensity<'a>(
    model: &ModelSpec,
    policy: &'a Policy,
    set: &StateSet,
) -> Result<PathIntegral<'a>, SimError> {
    PathIntegral::new(model, policy, Weight::Unit, |z, p| {
        set.iter()
            .filter(|&y| y != z)
            .map(|y| model.mixed_target_rate(z, p, y))
            .sum()
    })
}

pub fn out_intensity<'a>(
    model: &ModelSpec,
    policy: &'a Policy,
    set: &StateSet,
) -> Result<PathIntegral<'a>, SimError> {
    PathIntegral::new(model, policy, Weight::Unit, |z, p| {
        if set.contains(z) {
            model.mixed_exit_rate_unchecked(z, p)
        } else {
            0.0
        }
    })
}

/// Monte Carlo estimate of state and state-action marginals on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCurve {
    pub grid: TimeGrid,
    pub n_states: usize,
    pub n_actions: usize,
    pub trajectories: usize,
    /// `state[k * n_states + z]`
    pub state: Vec<f64>,
    pub state_se: Vec<f64>,
    /// `state_action[(k * n_states + z) * n_actions + a]`
    pub state_action: Vec<f64>,
    pub state_action_se: Vec<f64>,
    /// Fraction of paths exploded or truncated before each grid time.
    pub lost: Vec<f64>,
}

impl EmpiricalCurve {
    pub fn state(&self, k: usize, z: StateId) -> f64 {
        self.state[k * self.n_states + z]
    }

    pub fn state_se(&self, k: usize, z: StateId) -> f64 {
        self.state_se[k * self.n_states + z]
    }

    pub fn state_action(&self, k: usize, z: StateId, a: usize) -> f64 {
        self.state_action[(k * self.n_states + z) * self.n_actions + a]
    }

    pub fn state_action_se(&self, k: usize, z: StateId, a: usize) -> f64 {
        self.state_action_se[(k * self.n_states + z) * self.n_actions + a]
    }
}

/// Calls `f(k, z, decision)` at every grid point `t_k` where the path is observed and
/// not in a cemetery state, with the left-limit state `ξ_{t_k-}` and the policy's
/// relaxed action at `t_k`.
pub(crate) fn walk_grid(
    traj: &Trajectory,
    model: &ModelSpec,
    policy: &Policy,
    grid: TimeGrid,
    mut f: impl FnMut(usize, StateId, &[f64]),
) -> Result<(), SimError> {
    let view = GridView::of(policy);
    let mut m = view.map_or(0, |v| v.initial_memory());
    let mut z = traj.path.initial;
    let mut next = 0;
    let jumps = &traj.path.jumps;
    let known = traj.observed_until();
    for k in 0..grid.points() {
        let t = grid.time(k);
        while next < jumps.len() && jumps[next].time < t {
            if let Some(v) = view {
                m = v.update(m, z, jumps[next].state);
            }
            z = jumps[next].state;
            next += 1;
        }
        if t > known && traj.status != TrajectoryStatus::Completed {
            break;
        }
        if model.is_cemetery(z) {
            continue;
        }
        match (policy, view) {
            (_, Some(v)) => f(k, z, v.cell_decision(v.grid().cell_of(t), z, m)),
            (Policy::General(g), None) => {
                let p = g.decide(&traj.path.truncated_before(t), t);
                model.check_support(z, &p)?;
                f(k, z, &p)
            }
            _ => unreachable!(),
        }
    }
    Ok(())
}

/// `P̂(t,z,a) = (1/N) Σ_i 1{ξ^i_{t-} = z} π(a | history_i, t)` at every grid point, with
/// standard errors.
pub fn estimate_marginals(
    trajectories: &[Trajectory],
    model: &ModelSpec,
    policy: &Policy,
    grid: TimeGrid,
) -> Result<EmpiricalCurve, SimError> {
    let (ns, na) = (model.n_states(), model.n_actions());
    let points = grid.points();
    let mut hits = vec![0usize; points * ns];
    let mut sa_sum = vec![0.0; points * ns * na];
    let mut sa_sq = vec![0.0; points * ns * na];
    let mut alive = vec![0usize; points];
    for traj in trajectories {
        walk_grid(traj, model, policy, grid, |k, z, p| {
            alive[k] += 1;
            hits[k * ns + z] += 1;
            for (a, &w) in p.iter().enumerate() {
                sa_sum[(k * ns + z) * na + a] += w;
                sa_sq[(k * ns + z) * na + a] += w * w;
            }
        })?;
    }
    let n = trajectories.len();
    let nf = n.max(1) as f64;
    // standard error of a mean of values with the given sum and sum of squares
    let se = |sum: f64, sq: f64| {
        if n < 2 {
            return 0.0;
        }
        let mean = sum / nf;
        let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        sqrt(var / nf)
    };
    let state: Vec<f64> = hits.iter().map(|&h| h as f64 / nf).collect();
    let state_se = hits.iter().map(|&h| se(h as f64, h as f64)).collect();
    Ok(EmpiricalCurve {
        grid,
        n_states: ns,
        n_actions: na,
        trajectories: n,
        state,
        state_se,
        state_action: sa_sum.iter().map(|&s| s / nf).collect(),
        state_action_se: sa_sum.iter().zip(&sa_sq).map(|(&s, &q)| se(s, q)).collect(),
        lost: alive.iter().map(|&a| (n - a) as f64 / nf).collect(),
    })
}

/// Mean and standard error of a per-trajectory statistic, computed through `runner`.
pub fn mc_mean(
    runner: &dyn Runner,
    sim: &Simulation<'_>,
    stat: &(dyn Fn(&Trajectory) -> f64 + Sync),
) -> Result<(f64, f64), SimError> {
    let n = sim.config().trajectories;
    let failed = core::sync::atomic::AtomicBool::new(false);
    let values = runner.run(n, 1, &|i, out| match sim.trajectory(i) {
        Ok(traj) => out[0] = stat(&traj),
        Err(_) => failed.store(true, core::sync::atomic::Ordering::Relaxed),
    });
    if failed.load(core::sync::atomic::Ordering::Relaxed) {
        // rerun serially to surface the first error
        for i in 0..n {
            sim.trajectory(i)?;
        }
    }
    let mut m = Moments::default();
    for v in values {
        m.push(v);
    }
    Ok((m.mean(), m.std_error()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::{ModelBuilder, RelaxedAction};
    use crate::policy::MarkovPolicyGrid;

    fn fig2_path() -> Trajectory {
        Trajectory {
            path: History {
                initial: 1,
                jumps: alloc::vec![
                    Jump { time: 0.3, state: 0 },
                    Jump { time: 0.9, state: 1 },
                    Jump { time: 1.4, state: 0 },
                ],
            },
            status: TrajectoryStatus::Completed,
            horizon: 2.0,
        }
    }

    #[test]
    fn jump_counts() {
        let tr = fig2_path();
        assert_eq!(count_into(&tr, &StateSet::singleton(2, 1), 1.0), 1);
        assert_eq!(count_out_of(&tr, &StateSet::singleton(2, 1), 1.5), 2);
        let all = StateSet::all(2);
        assert_eq!(count_into(&tr, &all, 2.0), 3);
        assert_eq!(count_out_of(&tr, &all, 2.0), 3);
    }

    #[test]
    fn out_intensity_closed_form() {
        let m = catalog::figure_two();
        let pi: Policy = catalog::parity_policy(&m).into();
        let tr = Trajectory {
            path: History {
                initial: 0,
                jumps: alloc::vec![Jump { time: 0.5, state: 1 }],
            },
            status: TrajectoryStatus::Completed,
            horizon: 2.0,
        };
        let one = StateSet::singleton(2, 0);
        let v = integrated_intensity_out_of(&tr, &m, &pi, &one, 0.5).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        // entering state 2 makes the parity odd, so c with rate 1 applies afterwards
        let into_one = integrated_intensity_into(&tr, &m, &pi, &one, 1.5).unwrap();
        assert!((into_one - 1.0).abs() < 1e-15);
        let two = StateSet::singleton(2, 1);
        let out_two = integrated_intensity_out_of(&tr, &m, &pi, &two, 0.4).unwrap();
        assert_eq!(out_two, 0.0);
    }

    #[test]
    fn absorbing_model_has_no_jumps() {
        let mut b = ModelBuilder::new(["x"], ["a"]);
        b.feasible(0, &[0]);
        let m = b.build().unwrap();
        let pi = Policy::Markov(MarkovPolicyGrid::deterministic(&m, &[0]).unwrap());
        let cfg = SimConfig {
            horizon: 5.0,
            max_jumps: 10,
            trajectories: 50,
            seed: 1,
        };
        let trajs = simulate(&m, &pi, &[1.0], cfg).unwrap();
        assert!(trajs.iter().all(|t| t.n_jumps() == 0 && t.status == TrajectoryStatus::Completed));
        let all = StateSet::all(1);
        for t in &trajs {
            assert_eq!(integrated_intensity_into(t, &m, &pi, &all, 5.0).unwrap(), 0.0);
        }
        let mut rng = StreamRng::new(0, 0);
        let h = History::new(0);
        assert_eq!(sample_sojourn(&mut rng, &m, &pi, &h, 0.0, 10.0).unwrap(), None);
        let err = sample_destination(&mut rng, &m, 0, &RelaxedAction::dirac(1, 0)).unwrap_err();
        assert_eq!(err.code(), "ZERO_EXIT");
    }

    #[test]
    fn single_target_destination() {
        let m = catalog::figure_two();
        let mut rng = StreamRng::new(3, 0);
        let half = RelaxedAction::new(alloc::vec![0.5, 0.5]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_destination(&mut rng, &m, 1, &half).unwrap(), 0);
        }
    }

    #[test]
    fn cap_classification() {
        let collapsing = History {
            initial: 0,
            jumps: (1..=8)
                .map(|n| Jump {
                    time: (1..=n).map(|i| 1.0 / (i * i) as f64).sum(),
                    state: n,
                })
                .collect(),
        };
        assert_eq!(cap_status(&collapsing), TrajectoryStatus::ExplodedProxy);
        let steady = History {
            initial: 0,
            jumps: (1..=8).map(|n| Jump { time: n as f64, state: n % 2 }).collect(),
        };
        assert_eq!(cap_status(&steady), TrajectoryStatus::TruncatedJumps);
    }
}
