//! Indexed map over independent work items.
//!
//! With the `parallel` feature (default) the map runs on the rayon pool;
//! without it the same code compiles to a plain sequential loop. Callers must
//! pass a closure that is a pure function of the index so that the collected
//! vector is identical for any worker count. Reductions over the results stay
//! sequential in index order; that is what makes engine output bit-identical
//! across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept callable so benchmarks can compare the
/// two paths within one build.
pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
