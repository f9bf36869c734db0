//! Seeded random streams.
//!
//! Every random draw in the pipeline comes from one named generator so that
//! partitions, initializations and synthetic events can be reproduced by any
//! implementation that follows the recipe below.
//!
//! Generator: **SplitMix64** (64-bit state, state increment
//! `0x9e3779b97f4a7c15`, output mixer of Stafford variant 13), seeded by
//! using the 64-bit seed directly as the state.
//!
//! Derived draws (version 1 of the recipe):
//! - `uniform()`: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! - `below(n)`: `((next_u64() as u128 * n as u128) >> 64)`, in `[0, n)`.
//! - `normal()`: Box-Muller on `u1 = 1 - uniform()`, `u2 = uniform()`, cosine
//!   branch only (one normal per two words).
//! - `shuffle`: Fisher-Yates from the last index down, `j = below(i + 1)`.
//! - `fork(stream)`: a new generator whose seed is the first output of
//!   SplitMix64 seeded with `seed ^ (stream * 0xd1b54a32d192ed03)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Version tag of the derivation recipe above; stored in manifests.
pub const RNG_RECIPE: &str = "splitmix64-v1";

const STREAM_MIX: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    inner: SplitMix64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Independent substream keyed by `stream`, derived from the original
    /// seed (not from the current position).
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(derive_seed(self.seed, stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::seed_from_u64(seed ^ stream.wrapping_mul(STREAM_MIX)).next_u64()
}
