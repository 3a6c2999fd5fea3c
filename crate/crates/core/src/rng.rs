//! Seeded random streams and atom sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent stream `key` derived from `seed`.
pub fn stream(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// One standard normal draw.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws atom tuples: one index per factor, each factor with its own stream.
///
/// A plain finite sum has a single factor. A lifted consensus problem has one
/// factor per worker, keyed by the worker's data partition, so a local worker
/// holding the same key sees the same draws.
#[derive(Clone, Debug)]
pub struct AtomSampler {
    streams: Vec<ChaCha8Rng>,
    shape: Vec<usize>,
}

impl AtomSampler {
    pub fn new(seed: u64, keys: &[u64], shape: &[usize]) -> Self {
        assert_eq!(keys.len(), shape.len(), "one stream key per factor");
        Self { streams: keys.iter().map(|&k| stream(seed, k)).collect(), shape: shape.to_vec() }
    }

    pub fn factors(&self) -> usize {
        self.shape.len()
    }

    /// Fills `out` with `batch` tuples laid out batch-major.
    pub fn draw(&mut self, batch: usize, out: &mut Vec<usize>) {
        let f = self.shape.len();
        out.clear();
        out.resize(batch * f, 0);
        for (k, (rng, &n)) in self.streams.iter_mut().zip(&self.shape).enumerate() {
            for b in 0..batch {
                out[b * f + k] = rng.random_range(0..n);
            }
        }
    }
}
