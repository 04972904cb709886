//! Deterministic batch parallelism.
//!
//! Work is split into chunks whose boundaries depend only on the problem
//! size, every chunk is reduced sequentially inside, and chunk results are
//! combined in index order — so results are bit-identical regardless of
//! thread count, and identical to the serial fallback.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk count used for sample-partitioned reductions.
pub const REDUCE_CHUNKS: usize = 16;

/// Split `out` into `n` equal sample chunks and fill each independently.
pub fn for_each_sample<F, G>(out: &mut [F], n: usize, f: G)
where
    F: Send,
    G: Fn(usize, &mut [F]) + Sync,
{
    if n == 0 {
        return;
    }
    let chunk = out.len() / n;
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in out.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Map disjoint index ranges `[start, end)` over `0..n` and collect the
/// results in range order.
pub fn map_ranges<T, G>(n: usize, f: G) -> Vec<T>
where
    T: Send,
    G: Fn(usize, usize) -> T + Sync,
{
    let chunk = n.div_ceil(REDUCE_CHUNKS).max(1);
    let bounds: Vec<(usize, usize)> =
        (0..n).step_by(chunk).map(|s| (s, (s + chunk).min(n))).collect();
    #[cfg(feature = "parallel")]
    {
        bounds.par_iter().map(|&(s, e)| f(s, e)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        bounds.iter().map(|&(s, e)| f(s, e)).collect()
    }
}

/// Map every index to a value, collected in index order.
pub fn map_index<T, G>(n: usize, f: G) -> Vec<T>
where
    T: Send,
    G: Fn(usize) -> T + Sync + Send,
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
