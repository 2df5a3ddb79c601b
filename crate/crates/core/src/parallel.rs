//! Order-preserving fan-out over independent work units.
//!
//! Results always come back indexed by work unit, and every reduction in the
//! crate runs sequentially over that vector, so the worker count can change
//! scheduling but never a single bit of output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f)` evaluated on the current worker pool.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Runs `f` with `workers` threads available to [`par_map`]. Without the
/// `parallel` feature the count is ignored.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_under_any_worker_count() {
        let a = with_workers(1, || par_map(1000, |i| i * i));
        let b = with_workers(8, || par_map(1000, |i| i * i));
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
