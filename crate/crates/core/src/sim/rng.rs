//! Counter-style random streams and deterministic batch execution.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! so a path depends only on `(seed, path index, step index)`. Work is cut
//! into a fixed number of contiguous batches whose results are reduced in
//! batch order, which makes every estimate independent of the worker count.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Batches used for reductions and batch-means standard errors.
pub const N_BATCHES: usize = 32;

const OUTER_KEY: u64 = 0x6a09_e667_f3bc_c908;
const PRICER_KEY: u64 = 0xbb67_ae85_84ca_a73b;

pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Stream for outer-loop draw `index`, disjoint from the path streams.
pub fn outer_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ OUTER_KEY);
    rng.set_stream(index);
    rng
}

/// Stream for the noise shared by a Monte Carlo pricer.
pub fn pricer_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PRICER_KEY);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// The `n` standard normals driving path `path_index`, in step order.
pub fn path_normals(seed: u64, path_index: u64, n: usize) -> Vec<f64> {
    let mut rng = path_rng(seed, path_index);
    (0..n).map(|_| standard_normal(&mut rng)).collect()
}

/// Splits `0..n` into `batches` contiguous ranges whose sizes differ by at most one.
pub fn batch_ranges(n: usize, batches: usize) -> Vec<Range<usize>> {
    let base = n / batches;
    let extra = n % batches;
    let mut start = 0;
    (0..batches)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidInput("workers must be > 0".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Maps `f` over the batches of `0..n` in parallel and returns the results
/// in batch order.
pub fn map_batches<T, F>(n: usize, batches: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> Result<T> + Sync,
{
    batch_ranges(n, batches)
        .into_par_iter()
        .enumerate()
        .map(|(b, r)| f(b, r))
        .collect()
}
