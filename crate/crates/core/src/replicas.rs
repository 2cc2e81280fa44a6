//! Parallel fan-out of independent replicas with a fixed merge order.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(0..count)` on `workers` threads and returns the results in
/// replica order. Each replica must derive its randomness from its index.
pub fn run_replicas<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be ≥ 1".into()));
    }
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}
