//! Deterministic fan-out over path indices.

use rayon::prelude::*;

use crate::{Error, Result};

/// Evaluates `f(0..n)` on `workers` threads (all cores when `None`) and
/// returns the results in index order, so output never depends on scheduling.
pub fn map_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}
