//! Data-parallel map with a sequential fallback.
//!
//! Results are always returned in input order, and every item is computed
//! from its own inputs only, so the output is identical for any worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n` using up to `workers` threads (0 = all available).
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 && n > 1 {
            let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
            if workers == 0 {
                return run();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => return pool.install(run),
                Err(_) => return run(),
            }
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], workers: usize, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Send + Sync,
{
    map_indexed(items.len(), workers, |i| f(&items[i]))
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
