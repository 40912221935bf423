//! Deterministic stream splitting.
//!
//! Every random draw in the crate comes from `stream(seed, label, index)`:
//! the run seed, a purpose label (`"instance"`, `"sketch"`, `"perturb-v"`,
//! `"range-finder"`), and a counter. The three are mixed with FNV-1a and
//! SplitMix64 into a ChaCha8 seed, so streams for different purposes never
//! share state and a trace is reproducible from the run seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INSTANCE: &str = "instance";
pub const SKETCH: &str = "sketch";
pub const PERTURB_V: &str = "perturb-v";
pub const RANGE_FINDER: &str = "range-finder";

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, index))
}
