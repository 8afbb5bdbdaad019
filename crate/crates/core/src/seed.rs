//! Deterministic seed derivation: child seeds depend only on the master seed
//! and a counter, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a trial index and a stream tag into a child seed.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ index) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
