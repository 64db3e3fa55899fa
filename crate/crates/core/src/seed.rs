//! Seed derivation for reproducible runs.
//!
//! Every random stream in a run is a [`ChaCha8Rng`] keyed by a seed mixed from
//! the master seed and a stream label, so adding a stream never perturbs the
//! others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const POSE_STREAM: u64 = 0x706f_7365;
pub const INIT_STREAM: u64 = 0x696e_6974;
pub const DEMO_STREAM: u64 = 0x6465_6d6f;
pub const SHUFFLE_STREAM: u64 = 0x7368_7566;
pub const SAMPLE_STREAM: u64 = 0x7361_6d70;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream label and two indices.
pub fn derive(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
