//! Data-parallel helpers. With the `parallel` feature (default), campaign
//! loops fan out over rayon; without it every entry point below degrades to
//! the plain sequential iterator, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential counterpart of [`par_map`], kept unconditionally for the
/// benchmark suite and for callers that need a single-threaded path.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Runs `f` under a rayon pool of `workers` threads. `None` uses the global
/// pool; `Some(1)` is effectively sequential. Without the `parallel`
/// feature the worker count is ignored.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    F: FnOnce() -> R + Send,
    R: Send,
{
    #[cfg(feature = "parallel")]
    {
        match workers {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("worker pool")
                .install(f),
            _ => f(),
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
    fn par_map_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x * x;
        assert_eq!(par_map(&items, f), seq_map(&items, f));
    }

    #[test]
    fn with_workers_runs_closure() {
        let out = with_workers(Some(2), || par_map(&[1, 2, 3], |x| x + 1));
        assert_eq!(out, vec![2, 3, 4]);
    }
}
