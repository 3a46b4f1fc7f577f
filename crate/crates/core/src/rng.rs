//! Seeded random streams, one per (master seed, player, purpose).
//!
//! Streams never share state, so enabling one kind of randomness (for example
//! exploration) does not shift the draws of another (noise), and the draws a
//! player consumes up to iteration `k` depend only on the seed and `k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Noise,
    Exploration,
    Inner,
    Instance,
    Topology,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::Noise => b"noise",
            Purpose::Exploration => b"exploration",
            Purpose::Inner => b"inner",
            Purpose::Instance => b"instance",
            Purpose::Topology => b"topology",
        }
    }
}

pub fn stream(seed: u64, player: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"netnash/rng/v1");
    h.update(seed.to_le_bytes());
    h.update((player as u64).to_le_bytes());
    h.update(purpose.tag());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
