//! Seeded random streams.
//!
//! Every consumer asks for a stream by `(name, index)`; the stream is a
//! ChaCha generator keyed from the master seed and positioned on a stream id
//! derived from the pair, so the draws of one trial or register never depend
//! on how many other trials ran before it or on which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

/// Environment variable consulted for the default master seed.
pub const SEED_ENV: &str = "QRECOG_SEED";

/// Seed used when neither a flag nor the environment provides one.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Master seed read from [`SEED_ENV`], falling back to [`DEFAULT_SEED`].
pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory of independent named streams under one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `(name, index)`.
    pub fn stream(&self, name: &str, index: u64) -> Rng {
        let mut key = [0u8; 32];
        let mut s = self.seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = Rng::from_seed(key);
        rng.set_stream(splitmix(fnv1a(name.as_bytes()) ^ splitmix(index)));
        rng
    }

    /// Child factory whose streams are disjoint from the parent's.
    pub fn child(&self, name: &str, index: u64) -> Streams {
        Streams::new(splitmix(self.seed ^ fnv1a(name.as_bytes())) ^ splitmix(index.wrapping_add(1)))
    }
}

/// Fresh child factory drawn from an existing generator.
pub fn streams_from(rng: &mut Rng) -> Streams {
    use rand::RngCore;
    Streams::new(rng.next_u64())
}
