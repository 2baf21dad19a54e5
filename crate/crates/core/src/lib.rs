//! Continuous-time jump Markov decision processes on finite state and action sets.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//!
//! - [`model`]: validated rate kernels, relaxed actions and the rate-mixing algebra.
//! - [`policy`]: Markov grid policies, finite-memory history-dependent policies and
//!   arbitrary callback policies, plus the memory augmentation that turns a
//!   finite-memory policy into a Markov policy on a product chain.
//! - [`simulator`]: exact event-driven sampling of trajectories with keyed random streams.
//! - [`forward`]: marginal distributions via the minimal-solution series and Runge-Kutta
//!   integration of the forward equation.
//! - [`markovize`]: the conditional-distribution Markov policy of an arbitrary policy and
//!   the dominance/equality comparison of marginals.
//! - [`costs`]: discounted, average and constrained cost criteria.
//! - [`experiments`]: reproducible experiment drivers built from the pieces above.
//!
//! File formats, the command-line tool and parallel execution live in the `ctjmdp` crate.
#![no_std]

extern crate alloc;

pub mod catalog;
pub mod costs;
pub mod experiments;
pub mod forward;
pub mod markovize;
pub mod model;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod simulator;

mod linalg;
mod num;
mod paths;

pub use model::{ActionId, ModelError, ModelSpec, RelaxedAction, StateId, StateSet};
pub use policy::{FiniteMemoryPolicy, MarkovPolicyGrid, Policy, PolicyError, TimeGrid};
