//! Seed splitting. Every random consumer draws from its own named stream
//! derived from one 64-bit master seed, so enabling one analysis never shifts
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const DATASET_STREAM: &str = "dataset";
pub const INIT_STREAM: &str = "init";
pub const MC_STREAM: &str = "monte-carlo";
pub const PROBE_STREAM: &str = "probe";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of a named stream from the master seed.
pub fn stream_seed(master: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: &str) -> Rng {
    rng_from_seed(stream_seed(master, stream))
}

/// Sub-stream `index` of a seed, for per-trial generators in parallel loops.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}
