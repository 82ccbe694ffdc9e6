//! Named random sub-streams derived from one global seed.
//!
//! Every randomized component draws from `rng(global, "name", index)`, so any
//! component can be re-run in isolation and reproduce the batch run bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stable 64-bit seed for the `(name, index)` sub-stream of `global`.
pub fn derive(global: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(global ^ fnv1a(name)).wrapping_add(index))
}

pub fn rng(global: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(global, name, index))
}
