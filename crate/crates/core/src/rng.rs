//! Seeded, portable random streams.
//!
//! Every stochastic stage draws from a [`RngState`]. A state is a `(seed,
//! stream_id)` pair mapped onto a ChaCha8 generator, so the same pair gives
//! the same draws on every platform. Independent work units (null-model
//! replicas, walk roots) derive child streams with [`RngState::child`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Deterministic sub-stream for work unit `index`.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x9e37_79b9))),
        }
    }

    /// Named sub-stream, for stages that need a stream of their own.
    pub fn named(&self, name: &str) -> Self {
        let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
        self.child(h)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
