// SPDX-License-Identifier: Apache-2.0

//! Labelled, reproducible random streams.
//!
//! Every component draws from its own stream derived from one master seed,
//! so changing how many numbers the agent consumes never shifts the sequence
//! the environment or the simulated user sees.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ENV: &str = "env";
pub const AGENT: &str = "agent";
pub const USER: &str = "user";
pub const GENERALIZER: &str = "generalizer";

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    label_hash: u64,
    inner: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the stream named `label` from `master_seed`.
///
/// # Panics
/// If `label` is empty.
pub fn derive_stream(master_seed: u64, label: &str) -> RngStream {
    assert!(!label.is_empty(), "stream label must be non-empty");
    let label_hash = fnv1a(label.as_bytes());
    let mut sm = master_seed ^ label_hash.rotate_left(17);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
    }
    RngStream {
        master_seed,
        label_hash,
        inner: ChaCha8Rng::from_seed(seed),
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// A child stream, independent of this one and of its siblings.
    pub fn fork(&self, label: &str) -> RngStream {
        derive_stream(self.master_seed ^ self.label_hash, label)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.inner.gen_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}

/// The four per-run streams.
#[derive(Debug, Clone)]
pub struct Streams {
    pub env: RngStream,
    pub agent: RngStream,
    pub user: RngStream,
    pub generalizer: RngStream,
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            env: derive_stream(master_seed, ENV),
            agent: derive_stream(master_seed, AGENT),
            user: derive_stream(master_seed, USER),
            generalizer: derive_stream(master_seed, GENERALIZER),
        }
    }
}
