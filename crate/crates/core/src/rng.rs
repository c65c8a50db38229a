//! Keyed, counter-based random streams.
//!
//! A [`SeededStream`] is the pair `(seed, path)`; the four 64-bit words are
//! the ChaCha key, so every path addresses its own independent keystream.
//! Within a stream, ChaCha's 64-bit stream id selects a *lane*, which is how
//! Monte Carlo work is split into blocks without depending on thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type StreamRng = ChaCha20Rng;

/// FNV-1a hash of a label, used to turn experiment names into path ids.
pub const fn label(name: &str) -> u64 {
    let bytes = name.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamPath {
    pub experiment: u64,
    pub context: u64,
    pub replicate: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeededStream {
    pub seed: u64,
    pub path: StreamPath,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: StreamPath::default(),
        }
    }

    pub fn at(seed: u64, experiment: u64, context: u64, replicate: u64) -> Self {
        Self {
            seed,
            path: StreamPath {
                experiment,
                context,
                replicate,
            },
        }
    }

    pub fn experiment(mut self, id: u64) -> Self {
        self.path.experiment = id;
        self
    }

    pub fn context(mut self, index: u64) -> Self {
        self.path.context = index;
        self
    }

    pub fn replicate(mut self, index: u64) -> Self {
        self.path.replicate = index;
        self
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        let words = [
            self.seed,
            self.path.experiment,
            self.path.context,
            self.path.replicate,
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    /// Generator for lane 0 of this stream.
    pub fn rng(&self) -> StreamRng {
        self.lane(0)
    }

    /// Generator for the given lane of this stream.
    pub fn lane(&self, lane: u64) -> StreamRng {
        let mut rng = ChaCha20Rng::from_seed(self.key());
        rng.set_stream(lane);
        rng
    }
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn fill_standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for v in out {
        *v = standard_normal(rng);
    }
}
