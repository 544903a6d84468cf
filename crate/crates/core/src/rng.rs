//! Counter-based random substreams.
//!
//! Every random decision in the trainers draws from a generator keyed by
//! `(seed, purpose, a, b)`, typically `(seed, STREAM_x, generation, slot)`.
//! Results therefore do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_BREED: u64 = 2;
pub const STREAM_SWARM: u64 = 3;
pub const STREAM_DATA: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;

pub fn substream(seed: u64, purpose: u64, a: u64, b: u64) -> StreamRng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, purpose, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
