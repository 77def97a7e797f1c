//! Reproducible random streams.
//!
//! Work is split into fixed-size chunks; chunk `i` of a job salted with `salt`
//! always draws from the same ChaCha stream, so results depend on the seed
//! but not on how many threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

/// Items per chunk in parallel Monte Carlo jobs.
pub const CHUNK: usize = 4096;

/// Distinct job kinds use distinct salts so their streams never overlap.
pub mod salt {
    pub const BOUNDARY: u64 = 1;
    pub const VERTICAL: u64 = 2;
    pub const RETURN: u64 = 3;
    pub const SPEED: u64 = 4;
    pub const STATIONARITY: u64 = 5;
    pub const DIMENSION: u64 = 6;
    pub const BERNOULLI: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
}

/// The `index`-th stream of job `salt` under master `seed`.
pub fn stream(seed: u64, salt: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((salt << 48) ^ index);
    rng
}

/// Runs `f(rng, start, len)` over `n` items in chunks of [`CHUNK`], in parallel,
/// returning per-chunk results in chunk order.
pub fn par_chunked<T, F>(n: usize, seed: u64, salt: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, usize, usize) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let len = CHUNK.min(n - start);
            let mut rng = stream(seed, salt, c as u64);
            f(&mut rng, start, len)
        })
        .collect()
}

/// Runs `f` on a pool with `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Pairwise summation in fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn chunked_results_ignore_thread_count() {
        let run = |threads| {
            with_threads(Some(threads), || {
                par_chunked(20_000, 9, salt::SYNTHETIC, |rng, _, len| {
                    (0..len).map(|_| rng.random::<f64>()).sum::<f64>()
                })
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream(1, 1, 0).random();
        let b: u64 = stream(1, 1, 1).random();
        let c: u64 = stream(1, 2, 0).random();
        assert!(a != b && a != c && b != c);
    }
}
