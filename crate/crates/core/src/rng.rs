//! Deterministic per-trial random streams.
//!
//! Trial `i` of a run with master seed `m` always draws from the same stream,
//! whichever worker executes it, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed to each trial.
pub type TrialRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index` under `master_seed`.
#[inline]
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64_mix(master_seed.wrapping_add(trial_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(trial_seed(master_seed, trial_index))
}

/// Derives an independent master seed for a named sub-experiment, so that
/// e.g. every point of a sweep gets its own family of trial streams.
pub fn substream(master_seed: u64, label: u64) -> u64 {
    splitmix64_mix(master_seed ^ splitmix64_mix(label.wrapping_add(GOLDEN_GAMMA)))
}
