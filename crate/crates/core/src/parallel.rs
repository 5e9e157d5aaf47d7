use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maps `f` over `items`, preserving order. Runs on `jobs` threads only when
/// `jobs > 1` and the model declared itself thread-safe.
pub(crate) fn ordered_map<T, U, F>(
    items: &[T],
    jobs: usize,
    thread_safe: bool,
    f: F,
) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if jobs <= 1 || !thread_safe || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}
