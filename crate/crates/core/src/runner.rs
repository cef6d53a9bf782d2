//! Replica scheduling.
//!
//! Replica `i` always runs with seed `replica_seed(master, i)` and results
//! come back in index order, so output never depends on the worker count.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::rng::replica_seed;

pub const JOBS_ENV: &str = "COVERTIME_LAB_JOBS";

/// Worker count: `COVERTIME_LAB_JOBS` if set, else `flag`, else the number
/// of available cores.
pub fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    let jobs = match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| LabError::usage(format!("{JOBS_ENV}={v}: {e}")))?,
        Err(_) => match flag {
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if jobs == 0 {
        return Err(LabError::usage("jobs must be >= 1"));
    }
    Ok(jobs)
}

/// Runs `f(index, seed)` for every replica on `jobs` workers.
pub fn run_replicas<T, F>(master_seed: u64, replicas: u64, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::capacity(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|i| f(i, replica_seed(master_seed, i)))
            .collect()
    }))
}
