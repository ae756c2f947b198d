//! Deterministic RNG streams derived from one top-level seed.
//!
//! Every bootstrap run gets its own ChaCha stream keyed by a derived seed and
//! the run index, so runs can execute in any order on any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label for the baseline side of a difference.
pub const STREAM_BASELINE: u64 = 1;
/// Stream label for the exposed side of a difference.
pub const STREAM_EXPOSED: u64 = 2;
/// Single-set bootstrap.
pub const STREAM_SINGLE: u64 = 3;
/// Base label for per-bin curve estimates; the bin is added as an offset.
pub const STREAM_CURVE: u64 = 1 << 20;
/// Base label for per-bin duration steps; the bin is added as an offset.
pub const STREAM_DURATION: u64 = 2 << 20;
/// Base label for the synthetic generator.
pub const STREAM_SYNTH: u64 = 3 << 20;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

/// Generator for bootstrap run `run` under `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}
