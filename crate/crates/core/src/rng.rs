//! Seeded, label-derived random streams.
//!
//! Every stochastic routine in the crate draws from [`stream`], which maps a
//! `(seed, label)` pair to an independent ChaCha8 generator. The key
//! derivation is a fixed SplitMix64 absorption of the seed and the label
//! bytes, so streams are reproducible across platforms and independent of
//! thread schedule: parallel workers derive their own stream from a label
//! that encodes their job index instead of sharing a generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic ChaCha8 stream for `(seed, label)`.
///
/// Algorithm identity: the 32-byte ChaCha8 key is filled from a SplitMix64
/// chain whose state starts at `seed` and absorbs each label byte in order
/// (one SplitMix64 step per byte, XORing the byte into the state first).
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut state = seed;
    splitmix(&mut state);
    for b in label.as_bytes() {
        state ^= u64::from(*b);
        splitmix(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
