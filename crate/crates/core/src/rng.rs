//! Seed derivation and random streams.
//!
//! Every experiment carries one master seed. Independent streams (network
//! initialization, minibatch shuffling, data generation, confidence-level
//! sampling) are derived from it with a splitmix64 expansion, so changing how
//! much randomness one consumer draws never shifts another consumer's draws.
//! Row- and node-level generators are counter based: the generator for row `i`
//! depends only on `(seed, i)`, which keeps datasets reproducible row by row.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named random streams derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle,
    Data,
    Alpha,
    Spec,
    Test,
    Outer,
    Inner,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x1111_2222_3333_4444,
            Stream::Shuffle => 0x5151_a0a0_7373_0b0b,
            Stream::Data => 0x0da7_a0da_7a0d_a7a0,
            Stream::Alpha => 0xa1fa_a1fa_a1fa_a1fa,
            Stream::Spec => 0x5bec_5bec_0000_ffff,
            Stream::Test => 0x7e57_7e57_1234_9876,
            Stream::Outer => 0x0e7e_0e7e_4242_4242,
            Stream::Inner => 0x1223_3445_5667_7889,
        }
    }
}

/// One step of the splitmix64 generator, used as a 64-bit mixer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of a named stream under `seed`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.tag())
}

/// Seed for repetition `run` of an experiment with master seed `seed`.
pub fn run_seed(seed: u64, run: u64) -> u64 {
    splitmix64(seed ^ run)
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Counter-based generator for item `index` of a stream (row, node, path).
pub fn indexed(seed: u64, stream: Stream, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(derive_seed(seed, stream));
    rng.set_stream(index);
    rng
}
