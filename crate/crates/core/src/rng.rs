//! Deterministic random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived
//! from a single root seed: the 256-bit key is expanded from the root seed
//! and the 64-bit stream id selects an independent keystream. Chain `k` uses
//! stream [`CHAIN_STREAM_BASE`]` + k`, so ensemble results do not depend on
//! thread scheduling. A stream can be snapshotted (key, stream id, word
//! position) and restored bit-exactly, which is what checkpoints rely on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Coreset point selection.
pub const SELECT_STREAM: u64 = 1;
/// Per-iteration data subsampling.
pub const SUBSAMPLE_STREAM: u64 = 2;
/// Synthetic data generation.
pub const DATA_STREAM: u64 = 3;
/// First per-chain stream; chain `k` uses `CHAIN_STREAM_BASE + k`.
pub const CHAIN_STREAM_BASE: u64 = 1 << 32;

/// Random stream `stream` of the root seed `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for chain `k`.
pub fn chain_stream(seed: u64, k: usize) -> ChaCha8Rng {
    stream(seed, CHAIN_STREAM_BASE + k as u64)
}

/// Serializable position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl StreamState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            key: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
