//! Seed splitting.
//!
//! All randomness in a run descends from one root seed. A child seed for a
//! purpose is `splitmix64(root ^ fnv1a64(label))`, so children for different
//! labels are decorrelated and the mapping is stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
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

/// Derives the child seed for `(root, label)`.
pub fn derive(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a64(label.as_bytes()))
}

/// Derives an indexed child seed, e.g. one per trial or per epoch.
pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(root, label) ^ splitmix64(index))
}
