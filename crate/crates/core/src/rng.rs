//! Seeded randomness. Every random draw in the crate goes through a ChaCha8
//! stream (a 64-bit-counter block cipher), so outputs depend only on the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
