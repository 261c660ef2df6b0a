//! Seeded random streams and deterministic parallel sampling.
//!
//! Work is split into fixed-size chunks; chunk `i` draws from stream `i` of
//! a ChaCha generator seeded with the run seed. Results are combined in
//! chunk order, so output does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::limit_map::TorusPoint;

pub const CHUNK: usize = 4096;

/// Generator for one chunk of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform_torus_point<R: Rng>(rng: &mut R, g: f64) -> TorusPoint {
    TorusPoint {
        t: rng.random::<f64>(),
        v: g * rng.random::<f64>(),
    }
}

/// Runs `f(rng, count)` on consecutive chunks of `n` samples in parallel and
/// returns the per-chunk results in chunk order.
pub fn par_chunks<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    par_chunks_at(n, seed, |rng, _, count| f(rng, count))
}

/// Like [`par_chunks`], but also passes the global index of the chunk's
/// first sample.
pub fn par_chunks_at<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize, usize) -> T + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let start = i * CHUNK;
            let count = CHUNK.min(n - start);
            let mut rng = stream_rng(seed, i as u64);
            f(&mut rng, start, count)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_and_are_reproducible() {
        let a = par_chunks(10_000, 7, |rng, n| (n, rng.random::<u64>()));
        let b = par_chunks(10_000, 7, |rng, n| (n, rng.random::<u64>()));
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|x| x.0).sum::<usize>(), 10_000);
        assert_ne!(a[0].1, a[1].1);
    }
}
