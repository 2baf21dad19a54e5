//! Thread pool used for trajectory generation and battery entries.

use ctjmdp_core::runner::{Runner, Serial};
use rayon::prelude::*;

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "CTJMDP_THREADS";

/// Either the calling thread or a rayon pool. Results always come back in index order.
pub enum Pool {
    Serial,
    Rayon(rayon::ThreadPool),
}

impl Pool {
    /// `Some(1)` runs serially; `None` uses one thread per core.
    pub fn new(threads: Option<usize>) -> Result<Pool, rayon::ThreadPoolBuildError> {
        if threads == Some(1) {
            return Ok(Pool::Serial);
        }
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        Ok(Pool::Rayon(builder.build()?))
    }

    pub fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match self {
            Pool::Serial => (0..n).map(f).collect(),
            Pool::Rayon(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

impl Runner for Pool {
    fn run(&self, n: usize, width: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync)) -> Vec<f64> {
        match self {
            Pool::Rayon(pool) if width > 0 => {
                let mut out = vec![0.0; n * width];
                pool.install(|| {
                    out.par_chunks_mut(width)
                        .enumerate()
                        .for_each(|(i, chunk)| f(i, chunk))
                });
                out
            }
            _ => Serial.run(n, width, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_serial() {
        let f = |i: usize, out: &mut [f64]| {
            out[0] = i as f64;
            out[1] = (i * i) as f64;
        };
        let serial = Pool::new(Some(1)).unwrap().run(1000, 2, &f);
        let parallel = Pool::new(Some(4)).unwrap().run(1000, 2, &f);
        assert_eq!(serial, parallel);
        assert_eq!(Pool::new(Some(3)).unwrap().map(5, |i| i * 2), vec![0, 2, 4, 6, 8]);
    }
}
