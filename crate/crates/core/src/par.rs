//! Data-parallel dispatch.
//!
//! Every kernel here writes disjoint output rows (or reduces fixed-size
//! chunks in a fixed order), so results are bitwise identical whether the
//! `parallel` feature is on or off and regardless of the thread count.

/// Number of items per reduction chunk. Fixed so that floating-point
/// summation order never depends on the thread pool.
pub const REDUCE_CHUNK: usize = 1024;

/// Applies `f(row_index, row)` to each `width`-wide row of `out`.
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Sequential variant of [`for_each_row`], always available.
pub fn for_each_row_seq<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    if width == 0 {
        return;
    }
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Maps `f` over `0..n` into a vector, preserving order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
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

/// Runs two closures, concurrently when the `parallel` feature is on.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
