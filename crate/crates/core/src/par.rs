//! Data-parallel map with a sequential fallback when the `parallel` feature is off.
//!
//! Results are always collected in index order, so callers that reduce them
//! sequentially get identical output from both builds.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// True when the crate was built with rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
