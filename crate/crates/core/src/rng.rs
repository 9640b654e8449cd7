//! Seed derivation so that every consumer (environment, agent, buffer,
//! refresher) gets an independent, reproducible stream from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named random streams derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment,
    Agent,
    Buffer,
    Exploration,
    Refresh,
    Evaluation,
}

impl Stream {
    fn salt(self) -> u64 {
        match self {
            Stream::Environment => 0x9e37_79b9_7f4a_7c15,
            Stream::Agent => 0xbf58_476d_1ce4_e5b9,
            Stream::Buffer => 0x94d0_49bb_1331_11eb,
            Stream::Exploration => 0xd6e8_feb8_6659_fd93,
            Stream::Refresh => 0xa076_1d64_78bd_642f,
            Stream::Evaluation => 0xe703_7ed1_a0b4_28db,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    mix(master ^ stream.salt())
}

pub fn stream_rng(master: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
