//! Data-parallel helpers with a deterministic reduction order.
//!
//! Work is split into fixed-size chunks whose partial results are combined
//! left to right, so parallel and sequential execution produce bit-identical
//! output. Parallel execution requires the `parallel` feature and can be
//! switched off at runtime with [`set_exec`].

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Items per chunk in [`chunked_sum`] and [`chunked_scalar_sum`].
pub const CHUNK: usize = 256;

static PARALLEL: AtomicBool = AtomicBool::new(true);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

pub fn set_exec(mode: Exec) {
    PARALLEL.store(mode == Exec::Parallel, Ordering::SeqCst);
}

/// Effective execution mode. Always `Sequential` without the `parallel` feature.
pub fn exec() -> Exec {
    if cfg!(feature = "parallel") && PARALLEL.load(Ordering::SeqCst) {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Like [`map`] but runs on at most `threads` worker threads.
pub fn map_capped<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel && threads > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = threads;
    (0..n).map(f).collect()
}

fn chunk_ranges(n: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(n)).collect()
}

/// Sums vector contributions over `0..n`. `f(range, acc)` adds the terms of
/// `range` into a zeroed accumulator of length `dim`.
pub fn chunked_sum<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
{
    let partials = {
        let ranges = chunk_ranges(n);
        map(ranges.len(), |c| {
            let mut acc = vec![0.0; dim];
            f(ranges[c].clone(), &mut acc);
            acc
        })
    };
    let mut total = vec![0.0; dim];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// Scalar analogue of [`chunked_sum`].
pub fn chunked_scalar_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let ranges = chunk_ranges(n);
    map(ranges.len(), |c| f(ranges[c].clone())).into_iter().sum()
}
