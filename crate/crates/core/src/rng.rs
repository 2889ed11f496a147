//! Seeded random streams.
//!
//! Every consumer of randomness owns its own ChaCha stream derived from a
//! `(seed, purpose)` pair, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    LabelNoise = 2,
    Init = 3,
    Shuffle = 4,
    Mixup = 5,
    Augment = 6,
    Dropout = 7,
    Inference = 8,
    Split = 9,
}

pub fn stream(seed: u64, purpose: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
