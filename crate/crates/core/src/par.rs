//! Deterministic data-parallel helpers.
//!
//! Work is always split into the same fixed-size chunks and results come back
//! in chunk order, so reductions performed by the caller are bitwise identical
//! whatever the thread count. Without the `parallel` feature everything runs
//! on the calling thread.

use alloc::vec::Vec;
use core::ops::Range;

/// Chunk length used for per-point loops.
pub const CHUNK: usize = 512;

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `threads <= 1` runs sequentially.
    pub fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = (threads > 1)
                .then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok())
                .flatten();
            Self { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Self {}
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    /// Applies `f` to consecutive ranges of length `chunk` covering `0..n`.
    pub fn map_chunks<T, F>(&self, n: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync,
    {
        let chunk = chunk.max(1);
        let ranges: Vec<Range<usize>> =
            (0..n.div_ceil(chunk)).map(|c| c * chunk..((c + 1) * chunk).min(n)).collect();
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| ranges.into_par_iter().map(&f).collect());
        }
        ranges.into_iter().map(f).collect()
    }

    /// Applies `f` to every index in `0..n`, preserving order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let parts = self.map_chunks(n, CHUNK, |r| r.map(&f).collect::<Vec<T>>());
        let mut out = Vec::with_capacity(n);
        for p in parts {
            out.extend(p);
        }
        out
    }
}
