//! Keyed random substreams.
//!
//! Every random draw in a run comes from a `ChaCha8Rng` seeded by hashing the
//! run's master seed together with a purpose tag and the draw's coordinates
//! (step, agent id, attempt). Draws therefore never depend on iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a substream is used for. The discriminant is part of the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Feature vector and entry willingness of a newly created agent.
    Entry = 1,
    /// Per-step acting decision and adaptation draw of one agent.
    Action = 2,
    /// Training labels for the scorer (keyed by attempt).
    Labels = 3,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a sequence of words.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &w| mix64(acc ^ mix64(w)))
}

pub fn substream(master_seed: u64, stream: Stream, t: u64, key: u64) -> SimRng {
    SimRng::seed_from_u64(hash_words(&[master_seed, stream as u64, t, key]))
}
