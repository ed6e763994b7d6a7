//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by the
//! master seed and a purpose tag, with the stream number selecting the trial.
//! Trials therefore never share generator state and can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags. Distinct tags give unrelated keys for the same master seed.
pub mod purpose {
    pub const NATURE: u64 = 1;
    pub const BELIEF: u64 = 2;
    pub const PROBE: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const SCENARIO: u64 = 5;
    pub const FRESH: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for trial `index` of the given purpose under `seed`.
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
