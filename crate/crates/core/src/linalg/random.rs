//! Deterministic random streams.
//!
//! `SeededRng` is ChaCha8 keyed by a 64-bit seed (expanded to a 256-bit key
//! with the PCG32 scheme of `rand_core::SeedableRng::seed_from_u64`) and
//! positioned on a 64-bit ChaCha stream. ChaCha output does not depend on the
//! platform, so identical `(seed, stream)` pairs give identical sequences
//! everywhere. Distinct stream ids address disjoint keystreams of the same key.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::DenseMatrix;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn fill_normal(&mut self, out: &mut [f64], stddev: f64) {
        for v in out {
            *v = stddev * self.standard_normal();
        }
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Matrix with i.i.d. `N(0, stddev²)` entries, filled row by row.
pub fn sample_gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, stddev: f64) -> DenseMatrix {
    assert!(rows >= 1 && cols >= 1, "empty gaussian matrix requested");
    assert!(stddev > 0.0, "stddev must be positive");
    let mut m = DenseMatrix::zeros(rows, cols);
    rng.fill_normal(m.as_mut_slice(), stddev);
    m
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words; used to derive seeds from a
/// master seed and a grid point.
pub fn derive_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |acc, &w| mix64(acc ^ mix64(w)))
}
