//! Reproducible, stream-splittable random numbers.
//!
//! Every stream is a ChaCha20 keystream. The 256-bit key is the master seed
//! in little-endian order followed by 24 zero bytes, and the stream id selects
//! the ChaCha nonce. Derived quantities use fixed transforms:
//!
//! * uniform `[0, 1)`: the top 53 bits of one `u64`, times `2⁻⁵³`;
//! * uniform `(-1, 1)`: `2u - 1` for one uniform draw `u`, redrawn while it is exactly `-1`;
//! * standard normal: Box–Muller cosine branch, `√(-2 ln(1 - u₁))·cos(2π u₂)`,
//!   consuming two uniforms per normal.
//!
//! The keystream is platform independent, so any `(master_seed, stream_id)`
//! pair yields the same sequence everywhere.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ALGORITHM_ID: &str = "chacha20";

/// Identity of a stream; enough to recreate it from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub master_seed: u64,
    pub stream_id: u64,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self { id: StreamId { master_seed, stream_id }, inner }
    }

    pub fn from_id(id: StreamId) -> Self {
        Self::new(id.master_seed, id.stream_id)
    }

    pub fn algorithm_id(&self) -> &'static str {
        ALGORITHM_ID
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_symmetric(&mut self) -> f64 {
        loop {
            let v = 2.0 * self.next_uniform() - 1.0;
            if v > -1.0 {
                return v;
            }
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n` by rejection, so there is no modulo bias.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn rng_stream(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

/// Hashes a label into a 64-bit seed, for streams keyed by names such as case ids.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}
