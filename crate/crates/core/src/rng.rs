//! Seeding conventions.
//!
//! Trial `t` of a run with master seed `s` uses seed `s + t` (wrapping), so any
//! single trial can be replayed as trial 0 of a run seeded with that value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master.wrapping_add(trial)
}

pub fn rng_for(master: u64, trial: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(trial_seed(master, trial))
}
