//! Reproducible random streams.
//!
//! Every generator in the crate is a ChaCha8 stream cipher (`rand_chacha`).
//! Work is split deterministically:
//!
//! * [`derive_seed`] maps `(master, index)` to a child seed with one round of
//!   SplitMix64 applied to `master + (index + 1) * 0x9E37_79B9_7F4A_7C15`.
//! * [`stream`] keys ChaCha8 with a seed and selects the 64-bit stream id,
//!   so path `p` of a batch always draws from `stream(seed, p)`.
//!
//! Results therefore depend only on the master seed, never on how many
//! threads evaluate the streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator for stream `stream_id` under `seed`.
pub fn stream(seed: u64, stream_id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
