//! Reproducible experiment drivers. Every report is a pure function of its config.

use alloc::string::String;

use crate::costs::CostError;
use crate::forward::SolverError;
use crate::markovize::MarkovizeError;
use crate::model::ModelError;
use crate::policy::PolicyError;
use crate::simulator::SimError;

pub mod battery;
pub mod explosion;
pub mod extension;
pub mod two_state;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Markovize(#[from] MarkovizeError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ExperimentError {
    pub fn code(&self) -> &'static str {
        match self {
            ExperimentError::BadConfig(_) => "BAD_CONFIG",
            ExperimentError::Model(e) => e.code(),
            ExperimentError::Policy(e) => e.code(),
            ExperimentError::Solver(e) => e.code(),
            ExperimentError::Markovize(e) => e.code(),
            ExperimentError::Cost(e) => e.code(),
            ExperimentError::Sim(e) => e.code(),
        }
    }
}

/// Number of cells of step `step` in `[0, horizon]`, if `horizon` is a multiple of `step`.
pub(crate) fn cells_in(step: f64, horizon: f64) -> Result<usize, ExperimentError> {
    crate::num::integer_ratio(horizon, step).ok_or_else(|| {
        ExperimentError::BadConfig(alloc::format!("horizon {horizon} is not a multiple of step {step}"))
    })
}
