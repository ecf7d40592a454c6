//! Replica fan-out: a shared worker pool, deterministic per-replica RNG
//! streams, and order-deterministic aggregation regardless of completion
//! order.

use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("replica {replica} (seed {seed}, stream {replica}) failed: {message}")]
pub struct ReplicaFailure {
    pub replica: u64,
    pub seed: u64,
    pub message: String,
}

static POOL_THREADS: OnceLock<usize> = OnceLock::new();

/// Installs the global worker pool once per process; later calls keep the
/// first width (replicas are the only parallel unit, so one pool serves
/// every experiment in a run).
pub fn configure_threads(threads: usize) -> usize {
    *POOL_THREADS.get_or_init(|| {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
        threads
    })
}

/// Runs `replicas` jobs in parallel and collects the results ordered by
/// replica index. The first failing replica (by index) aborts the run.
pub fn run_replicas<T, F>(
    replicas: usize,
    seed: u64,
    job: F,
) -> Result<Vec<T>, ReplicaFailure>
where
    T: Send,
    F: Fn(u64) -> Result<T, String> + Sync,
{
    let results: Vec<Result<T, String>> =
        (0..replicas as u64).into_par_iter().map(&job).collect();
    let mut out = Vec::with_capacity(replicas);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(message) => {
                return Err(ReplicaFailure {
                    replica: i as u64,
                    seed,
                    message,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_ordered_by_replica_index() {
        let out = run_replicas(64, 7, |r| Ok::<u64, String>(r * 2)).unwrap();
        assert_eq!(out, (0..64u64).map(|r| r * 2).collect::<Vec<_>>());
    }

    #[test]
    fn first_failure_by_index_is_reported() {
        let err = run_replicas(16, 7, |r| {
            if r >= 5 {
                Err(format!("boom {r}"))
            } else {
                Ok(r)
            }
        })
        .unwrap_err();
        assert_eq!(err.replica, 5);
        assert_eq!(err.seed, 7);
    }
}
