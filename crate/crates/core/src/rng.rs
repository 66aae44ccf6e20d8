//! Seeded randomness for a run.
//!
//! A run owns exactly one [`SimRng`] stream seeded from the run seed. Anything
//! that needs a private generator (deep agents) gets a child seed from
//! [`derive_seed`], which is a pure function of the run seed and a stable key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the simulator.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an ordered list of keys into a new seed.
///
/// Order matters: `derive_seed(s, &[a, b]) != derive_seed(s, &[b, a])` in general.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    let mut acc = mix64(base ^ 0x9e37_79b9_7f4a_7c15);
    for (i, &k) in keys.iter().enumerate() {
        acc = mix64(acc ^ mix64(k.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))));
    }
    acc
}

/// Seed for an agent's private generator.
pub fn agent_child_seed(run_seed: u64, agent_id: usize) -> u64 {
    derive_seed(run_seed, &[0xa6e7, agent_id as u64])
}
