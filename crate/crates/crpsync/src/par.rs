//! Feature-gated data parallelism.
//!
//! Everything parallel in this crate is a map over an index range with the
//! results kept in index order, so reductions downstream are performed in a
//! fixed sequence and outputs are bit-identical with the `parallel` feature
//! on or off.

/// Maps `f` over `0..n`, across threads when the `parallel` feature is
/// enabled, returning results in index order.
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
