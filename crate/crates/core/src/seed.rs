//! Seed derivation.
//!
//! All randomness in a run flows from one top-level `u64` seed. Each
//! subcomponent asks for a child by a string label; the child seed is
//! `splitmix64(parent ^ fnv1a64(label))`. Per-repetition generators are
//! ChaCha8 instances seeded with the component seed and switched to the
//! stream numbered by the repetition index, so repetition `i` always sees
//! the same numbers regardless of which thread runs it or in what order.
//!
//! Labels in use: `"check-probe"`, `"diffusion"`, `"g2"`, `"spin"`,
//! `"ple"`, `"ple/<pillar>"`, `"ple-cohort"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: &str) -> SeedTree {
        SeedTree { seed: splitmix64(self.seed ^ fnv1a64(label.as_bytes())) }
    }

    /// Generator for repetition `index` of this component.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
