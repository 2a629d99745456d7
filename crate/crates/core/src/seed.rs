//! Seed derivation for independent, order-free random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream keyed by a master seed
//! and a short list of integer tags (scenario index, source index, cell index, ...), so
//! parallel and serial runs produce identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Distinct tag lists give statistically independent seeds.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(seed.wrapping_add(GOLDEN));
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(GOLDEN)).rotate_left(17));
    }
    h
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}
