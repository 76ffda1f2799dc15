//! Goal-conditioned actor-critic learning with hindsight relabeling,
//! goal-conditioned adversarial imitation, and goal-based self-adaptive
//! admission of self-generated trajectories into the expert buffer.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. File formats, the CLI and wall-clock concerns live in the
//! companion `sagail` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agents;
pub mod demogen;
pub mod env;
mod error;
pub mod gail;
pub mod her;
mod math;
pub mod nn;
pub mod replay;
pub mod sagail;
pub mod train;

pub use error::{Error, Result};

/// Seeded generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build a generator from a master seed and a stream index.
///
/// Independent consumers (workers, evaluation, demo generation) take
/// distinct streams so their draws never interleave.
pub fn rng_from(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
