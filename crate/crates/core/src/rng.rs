//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream keyed by
//! `(master seed, purpose, a, b, c)`. Streams for different clients, rounds
//! and steps are independent of each other, so parallel and sequential
//! execution consume identical randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Keeps sampling and privacy noise independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Sampling = 2,
    ReleaseNoise = 3,
    AggregateNoise = 4,
    Split = 6,
    Generate = 7,
    Attack = 8,
    Partition = 9,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the stream for `(master, purpose, a, b, c)`.
pub fn stream(master: u64, purpose: Purpose, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut state = master;
    for word in [purpose as u64, a, b, c] {
        state ^= splitmix64(&mut state.clone()).rotate_left(17) ^ word;
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
