//! Counter-style random streams.
//!
//! Every replicate gets its own generator: ChaCha8 keyed by `(seed, domain)`
//! with the replicate index as the 64-bit stream id. A replicate's numbers
//! depend only on those three values, never on which worker ran it or in
//! what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the uses of one user seed so they never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Draw = 0x5354_5241_5441, // stratified draws
    SignTest = 0x5349_474e,
    Subsample = 0x5355_4253,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
