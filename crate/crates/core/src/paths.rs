//! Piecewise-constant functionals along sample paths of grid policies.

use alloc::vec::Vec;

use crate::model::{ModelSpec, StateId};
use crate::num::exp;
use crate::policy::{FiniteMemoryPolicy, MarkovPolicyGrid, Policy, TimeGrid};

/// Time weighting of a path integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `∫ f ds`
    Unit,
    /// `∫ e^{-α s} f ds`
    Discount(f64),
}

impl Weight {
    /// `∫_a^b w(s) ds`.
    #[inline]
    pub(crate) fn mass(self, a: f64, b: f64) -> f64 {
        match self {
            Weight::Discount(alpha) if alpha != 0.0 => (exp(-alpha * a) - exp(-alpha * b)) / alpha,
            _ => b - a,
        }
    }
}

/// Markov and finite-memory policies seen uniformly as tables over (cell, state, memory).
#[derive(Debug, Clone, Copy)]
pub(crate) enum GridView<'a> {
    Markov(&'a MarkovPolicyGrid),
    Memory(&'a FiniteMemoryPolicy),
}

impl<'a> GridView<'a> {
    pub(crate) fn of(policy: &'a Policy) -> Option<Self> {
        match policy {
            Policy::Markov(p) => Some(GridView::Markov(p)),
            Policy::FiniteMemory(p) => Some(GridView::Memory(p)),
            Policy::General(_) => None,
        }
    }

    pub(crate) fn grid(&self) -> TimeGrid {
        match self {
            GridView::Markov(p) => p.grid(),
            GridView::Memory(p) => p.grid(),
        }
    }

    pub(crate) fn n_memory(&self) -> usize {
        match self {
            GridView::Markov(_) => 1,
            GridView::Memory(p) => p.n_memory(),
        }
    }

    pub(crate) fn initial_memory(&self) -> usize {
        match self {
            GridView::Markov(_) => 0,
            GridView::Memory(p) => p.initial_memory(),
        }
    }

    #[inline]
    pub(crate) fn update(&self, m: usize, from: StateId, to: StateId) -> usize {
        match self {
            GridView::Markov(_) => 0,
            GridView::Memory(p) => p.update(m, from, to),
        }
    }

    #[inline]
    pub(crate) fn cell_decision(&self, k: usize, z: StateId, m: usize) -> &'a [f64] {
        match self {
            GridView::Markov(p) => p.cell_action(k, z),
            GridView::Memory(p) => p.cell_decision(k, z, m),
        }
    }

    /// One profile per `(z, m)`, indexed `z * n_memory + m`, with cell values
    /// `f(z, decision)`.
    pub(crate) fn profiles(
        &self,
        model: &ModelSpec,
        weight: Weight,
        f: impl Fn(StateId, &[f64]) -> f64,
    ) -> Vec<Profile> {
        let grid = self.grid();
        let nm = self.n_memory();
        let mut out = Vec::with_capacity(model.n_states() * nm);
        for z in 0..model.n_states() {
            for m in 0..nm {
                let values = (0..grid.cells)
                    .map(|k| f(z, self.cell_decision(k, z, m)))
                    .collect();
                out.push(Profile::new(grid, weight, values));
            }
        }
        out
    }
}

/// A piecewise-constant function on a time grid (last cell extended to infinity)
/// together with its running weighted integral.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    grid: TimeGrid,
    weight: Weight,
    values: Vec<f64>,
    /// `cum[k] = ∫_0^{k h} v w`.
    cum: Vec<f64>,
}

impl Profile {
    pub(crate) fn new(grid: TimeGrid, weight: Weight, values: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for (k, &v) in values.iter().enumerate() {
            acc += v * weight.mass(grid.time(k), grid.time(k + 1));
            cum.push(acc);
        }
        Profile {
            grid,
            weight,
            values,
            cum,
        }
    }

    /// `∫_0^t v(s) w(s) ds`.
    pub(crate) fn integral_to(&self, t: f64) -> f64 {
        let k = self.grid.cell_of(t);
        let start = self.grid.time(k);
        if t <= start {
            // t on the left edge of cell k, or before 0
            return if t <= 0.0 { 0.0 } else { self.cum[k] };
        }
        self.cum[k] + self.values[k] * self.weight.mass(start, t)
    }

    /// `∫_a^b v w` for `a <= b`.
    #[inline]
    pub(crate) fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.integral_to(b) - self.integral_to(a)
    }

    /// Smallest `t` with `∫_0^t v = target` and the cell containing the crossing, for a
    /// nonnegative profile with unit weight. `None` if the integral never reaches
    /// `target`.
    pub(crate) fn inverse(&self, target: f64) -> Option<(f64, usize)> {
        debug_assert!(matches!(self.weight, Weight::Unit));
        let last = self.values.len() - 1;
        // first k with cum[k+1] >= target, among k < last
        let k = self.cum[1..=last].partition_point(|&c| c < target);
        let k = if k < last {
            // cells before k end below target, cell k reaches it
            k
        } else {
            last
        };
        let v = self.values[k];
        if v <= 0.0 {
            return None;
        }
        let t = self.grid.time(k) + (target - self.cum[k]) / v;
        if !t.is_finite() {
            return None;
        }
        Some((t.max(self.grid.time(k)), k))
    }
}
