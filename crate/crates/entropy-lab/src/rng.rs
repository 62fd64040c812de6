//! Seeded randomness with named substreams.
//!
//! Every run derives all of its randomness from a single [`Seed`]. Substreams
//! are keyed by a purpose string (`"datagen"`, `"pretrain"`, ...) so tweaking
//! one stage never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root seed for a run. Identical seeds yield bit-identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Seed {
    /// Derive an independent substream seed for a named purpose.
    pub fn substream(self, purpose: &str) -> Seed {
        Seed(splitmix64(self.0 ^ fnv1a(purpose.as_bytes())))
    }

    /// A further split keyed by an index (per dataset, per grid cell, ...).
    pub fn index(self, i: u64) -> Seed {
        Seed(splitmix64(self.0.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
    }

    /// Materialize the generator for this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
