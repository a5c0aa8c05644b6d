//! Reproducible random streams and the worker pool.
//!
//! Every stochastic task draws from its own `(seed, stream_id)` stream, so
//! results do not depend on how tasks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Stream = ChaCha8Rng;

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "WORKERS";

pub fn seeded_stream(seed: u64, stream_id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Worker count from `WORKERS`, falling back to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `f` inside a pool sized by [`worker_count`].
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    with_n_workers(worker_count(), f)
}

pub fn with_n_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Map `f` over streams `first..first + count` in parallel, preserving order.
pub fn par_streams<T, F>(seed: u64, first: u64, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> T + Sync,
{
    (first..first + count)
        .into_par_iter()
        .map(|id| {
            let mut rng = seeded_stream(seed, id);
            f(id, &mut rng)
        })
        .collect()
}
