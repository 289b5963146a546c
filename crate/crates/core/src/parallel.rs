//! Data-parallel helpers, compiled against rayon when the `parallel` feature
//! (on by default) is enabled and falling back to sequential iteration
//! otherwise. Results are collected in index order either way, so outputs are
//! identical across both builds and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Caps the global worker pool at `threads` (values of 0 or `None` keep the
/// default). Returns the effective thread count. Must be called before any
/// parallel work; later calls cannot shrink an already-built pool.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: Option<usize>) -> usize {
    if let Some(t) = threads {
        if t > 0 {
            // Ignore the error: the pool may already exist with this size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    rayon::current_num_threads()
}

/// Sequential builds always run single-threaded.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: Option<usize>) -> usize {
    1
}
