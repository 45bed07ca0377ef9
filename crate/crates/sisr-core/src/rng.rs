//! Deterministic, splittable random-number streams.
//!
//! Every stochastic computation draws from a ChaCha stream addressed by
//! `(master_seed, stream_id)`. Stream ids are derived from *values* (grid
//! coordinates, sample indices) rather than loop positions, so sweep cells
//! and Monte-Carlo samples are independent of iteration order and of how
//! work is distributed across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Domain tags keeping unrelated consumers on disjoint streams.
pub mod tag {
    pub const SIMULATE: u64 = 0x01;
    pub const ESCAPE: u64 = 0x02;
    pub const SWEEP: u64 = 0x03;
    pub const TRAIN_INIT: u64 = 0x10;
    pub const TRAIN_BATCH: u64 = 0x11;
    pub const TRAIN_ROLLOUT: u64 = 0x12;
    pub const EVAL_ROLLOUT: u64 = 0x13;
}

/// Address of one random stream: a master seed plus a derived stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    /// Derive a child stream by mixing a tag and salt values into this id.
    pub fn derive(&self, tag: u64, salts: &[u64]) -> Self {
        Self { master: self.master, stream: stream_id_from(self.stream, tag, salts) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master);
        r.set_stream(self.stream);
        r
    }
}

impl std::fmt::Display for StreamSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.master, self.stream)
    }
}

/// splitmix64; full-period mixer, good avalanche.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn stream_id_from(base: u64, tag: u64, salts: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(tag));
    for &s in salts {
        h = splitmix64(h ^ s);
    }
    h
}

/// Stream id from a domain tag and salt values (e.g. grid coordinates).
pub fn stream_id(tag: u64, salts: &[u64]) -> u64 {
    stream_id_from(0, tag, salts)
}

/// Salt from a float's bit pattern, so ids follow values, not positions.
pub fn salt(x: f64) -> u64 {
    x.to_bits()
}
