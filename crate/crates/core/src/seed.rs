//! Counter-based seed expansion.
//!
//! Every random decision in a run is drawn from a ChaCha stream selected by
//! `(root, stream)`, so results do not depend on the order in which
//! independent cells are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the different consumers of randomness.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const ALS_INIT: u64 = 2;
    pub const RANDOM_ATTACK: u64 = 3;
    pub const TARGETS: u64 = 4;
    pub const GENERATOR: u64 = 5;
}

pub fn rng_for(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed from `root` for the `index`-th cell of `stream`.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut rng = rng_for(root, stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
