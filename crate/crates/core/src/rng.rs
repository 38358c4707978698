//! Keyed random streams.
//!
//! Every random draw in a chain comes from a generator seeded by hashing
//! `(seed, chain, sweep, stream)`, so a sweep's output does not depend on
//! the order or thread in which individuals are visited, and a chain can
//! be resumed from its iteration counter alone.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Streams used for chain-level updates; individuals use their index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Individual(usize),
    Beta,
    OnsetRate,
    ProgRate,
    PsiBlock,
    Init,
}

impl Stream {
    fn key(self) -> u64 {
        match self {
            Stream::Individual(i) => i as u64,
            Stream::Beta => u64::MAX,
            Stream::OnsetRate => u64::MAX - 1,
            Stream::ProgRate => u64::MAX - 2,
            Stream::PsiBlock => u64::MAX - 3,
            Stream::Init => u64::MAX - 4,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine keys into one well-mixed 64-bit value.
#[inline]
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter().fold(0x6A09_E667_F3BC_C909, |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Key identifying one chain of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainKey {
    pub seed: u64,
    pub chain: u64,
}

impl ChainKey {
    pub fn new(seed: u64, chain: u64) -> Self {
        Self { seed, chain }
    }

    #[inline]
    pub fn stream(&self, sweep: u64, stream: Stream) -> StreamRng {
        StreamRng::seed_from_u64(mix(&[self.seed, self.chain, sweep, stream.key()]))
    }
}

/// A plain generator for one-off tasks (simulation, tests).
pub fn seeded(seed: u64, purpose: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix(&[seed, purpose]))
}
