//! Sequential / parallel execution of independent work items.
//!
//! Every helper here returns results in index order regardless of the mode,
//! and callers derive per-item randomness from the item index, so output is
//! identical whether or not rayon is in play.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run a batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when built with the `parallel` feature, otherwise falls
    /// back to [`Execution::Sequential`].
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode actually runs on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indices<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps over a slice, possibly in parallel.
pub fn map_slice<'a, S, T, F>(items: &'a [S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(usize, &'a S) -> T + Sync + Send,
{
    map_indices(items.len(), exec, |i| f(i, &items[i]))
}

/// Splits `total` into chunks of at most `chunk` items.
///
/// Returns `(start, len)` pairs. The split depends only on `total` and
/// `chunk`, never on the thread count.
pub fn chunks(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    assert!(chunk > 0);
    (0..total)
        .step_by(chunk)
        .map(|start| (start, chunk.min(total - start)))
        .collect()
}
