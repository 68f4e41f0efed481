//! Deterministic seed derivation.
//!
//! A derived seed is a splitmix64 chain over the master seed and every
//! coordinate in order, so changing any single coordinate (or the master)
//! changes the result, and the same coordinates always reproduce it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master`, position-sensitively.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix(master ^ 0x243f_6a88_85a3_08d3);
    for (i, &p) in parts.iter().enumerate() {
        h = splitmix(h ^ splitmix(p.wrapping_add((i as u64).wrapping_mul(0x1357_9bdf_2468_ace1))));
    }
    h
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags so independent uses of one master seed never share draws.
pub mod tags {
    pub const OMEGA: u64 = 0x6f6d_6567_61;
    pub const PERTURB: u64 = 0x7065_7274;
    pub const CRISP: u64 = 0x6372_6973_70;
    pub const OPTIMIZER: u64 = 0x6f70_74;
    pub const INIT: u64 = 0x696e_6974;
}
