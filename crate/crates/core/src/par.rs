//! Row-level data parallelism with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon's global pool;
//! without it they run the same closures in order. Every helper writes each
//! output slot from exactly one closure call, so results are bit-identical
//! in both builds regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows below this count are processed sequentially even with `parallel`.
pub const MIN_PARALLEL_ROWS: usize = 256;

/// Calls `f(row_index, row)` for every `cols`-wide row of `data`.
pub fn rows_mut<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if data.len() / cols >= MIN_PARALLEL_ROWS {
            data.par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    rows_mut_seq(data, cols, f)
}

/// Sequential form of [`rows_mut`], always available for benchmarking.
pub fn rows_mut_seq<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    if cols == 0 {
        return;
    }
    data.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
}

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

/// Whether this build was compiled with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
