//! Counter-based seed derivation.
//!
//! Every random stream (projection per round, minibatch per client and step,
//! data per client) is keyed by a master seed and a short path of integers,
//! so each stream can be regenerated independently of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PROJECTION: u64 = 0x5052_4f4a;
pub const STREAM_BATCH: u64 = 0x4241_5443;
pub const STREAM_DATA: u64 = 0x4441_5441;
pub const STREAM_INIT: u64 = 0x494e_4954;
pub const STREAM_CELL: u64 = 0x4345_4c4c;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
