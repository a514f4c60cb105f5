//! Seeded random streams.
//!
//! Every stochastic routine takes a [`Stream`]. Streams are ChaCha20 keystreams
//! keyed by a master seed and selected by a 64-bit stream id, so independent
//! consumers (data generation, initialisation, training, sampling) never
//! share or reorder draws. Ids are derived from names with FNV-1a so a stream
//! can be reconstructed from a manifest line like `stream=train seed=7`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// FNV-1a over the bytes of `name`.
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha20Rng,
}

impl Stream {
    /// Stream `name` under master `seed`.
    pub fn named(seed: u64, name: &str) -> Self {
        Self::with_id(seed, stream_id(name))
    }

    pub fn with_id(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Self { rng }
    }

    /// Child stream, e.g. one per trial or per sampler cell.
    pub fn fork(&self, name: &str, index: u64) -> Self {
        let seed = self.rng.get_seed();
        let mut key = u64::from_le_bytes(seed[..8].try_into().unwrap());
        key ^= stream_id(name).rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Self::with_id(key, self.rng.get_stream() ^ stream_id(name).wrapping_add(index))
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.normal()).collect()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
