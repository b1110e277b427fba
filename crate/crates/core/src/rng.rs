//! Seed-derived RNG substreams.
//!
//! Every random draw in a run comes from a stream keyed by (run seed, domain,
//! index). Each agent owns its wind and reception streams and advances them
//! only with its own draws, so evaluating agents in parallel cannot change
//! the realized sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Wind,
    Reception,
    Federation,
    InitNoise,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Wind => 1,
            Domain::Reception => 2,
            Domain::Federation => 3,
            Domain::InitNoise => 4,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent substream for (seed, domain, index).
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix(seed ^ splitmix(domain.tag()) ^ splitmix(index.wrapping_mul(0xa076_1d64_78bd_642f)));
    for chunk in key.chunks_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
