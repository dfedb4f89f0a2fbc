//! Internal data-parallel map helper.
//!
//! All batch work in this crate is "map independently, reduce in index
//! order". Collecting into a `Vec` keeps item order, so the caller's
//! reduction is identical whether the map ran on rayon or inline, and the
//! `parallel` feature cannot change any numeric result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon dispatch overhead outweighs the work.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 64;

/// `(0..n).map(f)` collected in index order, on rayon when worthwhile.
#[cfg(feature = "parallel")]
pub(crate) fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if n < PAR_THRESHOLD {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}
