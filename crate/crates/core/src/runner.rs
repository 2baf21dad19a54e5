//! Execution strategy for independent Monte Carlo replications.

use alloc::vec;
use alloc::vec::Vec;

/// Evaluates `n` independent replications, each writing `width` numbers.
///
/// Implementations may run replications concurrently but must return them in index
/// order, so reductions over the output are independent of the strategy.
pub trait Runner: Sync {
    fn run(&self, n: usize, width: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync)) -> Vec<f64>;
}

/// Runs replications one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Runner for Serial {
    fn run(&self, n: usize, width: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync)) -> Vec<f64> {
        let mut out = vec![0.0; n * width];
        for (i, chunk) in out.chunks_mut(width.max(1)).enumerate().take(n) {
            f(i, chunk);
        }
        out
    }
}
