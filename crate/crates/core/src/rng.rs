//! Named, independent random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Consumers of randomness in a bi-level run. Each gets its own stream so
/// that adding draws in one consumer never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    SimRollout,
    RealRollout,
    Init,
    Fit,
    Custom(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::SimRollout => 0x5349_4d5f_524f_4c4c,
            Stream::RealRollout => 0x5245_414c_5f52_4f4c,
            Stream::Init => 0x494e_4954_5f5f_5f5f,
            Stream::Fit => 0x4649_545f_5f5f_5f5f,
            Stream::Custom(t) => t,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag()).wrapping_add(index))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, stream, index))
}
