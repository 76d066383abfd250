//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! rayon global pool; without it every execution mode falls back to a
//! sequential loop. Output order always follows the input index, so the two
//! paths are interchangeable.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every index in `0..count` and collects the results in
/// index order.
pub fn map_indexed<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..count).map(f).collect()
}

/// Splits `total` trials into fixed-size batches. The batch layout depends
/// only on `total` and `batch`, never on the thread count.
pub fn batch_sizes(total: u64, batch: u64) -> Vec<u64> {
    assert!(batch > 0, "batch size must be positive");
    let full = total / batch;
    let rest = total % batch;
    let mut sizes = vec![batch; full as usize];
    if rest > 0 {
        sizes.push(rest);
    }
    sizes
}

/// Runs `f(batch_index, batch_len)` over the batches of `total` trials and
/// sums the returned counts.
pub fn sum_batches<F>(total: u64, batch: u64, exec: Execution, f: F) -> u64
where
    F: Fn(u64, u64) -> u64 + Sync + Send,
{
    let sizes = batch_sizes(total, batch);
    map_indexed(sizes.len(), exec, |i| f(i as u64, sizes[i]))
        .into_iter()
        .sum()
}

/// Configures the global rayon pool size. `0` keeps rayon's default.
/// Returns false when the pool was already initialised or the crate is
/// built without the `parallel` feature.
pub fn configure_threads(jobs: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if jobs == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        false
    }
}
