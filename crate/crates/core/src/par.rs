//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it they
//! are plain iterator maps. Results always come back in input order, and any
//! reduction over them is done sequentially by the caller so outputs do not
//! depend on thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

/// Maps `f` over `0..len`, preserving order.
pub fn map_range<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Fills `out[i] = f(i)` in place. Parallel only once `out` is at least
/// `min_parallel` long; short slices are not worth a fork.
pub fn fill_indexed<F>(out: &mut [f64], min_parallel: usize, f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= min_parallel {
        out.par_iter_mut()
            .with_min_len(min_parallel / 4 + 1)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
        return;
    }
    let _ = min_parallel;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Runs `op` with parallel helpers restricted to a single thread.
///
/// Used by the benches to compare the parallel and sequential paths inside one
/// build.
pub fn sequential<R, OP>(op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(op)
    }
    #[cfg(not(feature = "parallel"))]
    {
        op()
    }
}

/// Number of worker threads the parallel helpers will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
