//! Named, seeded RNG substreams.
//!
//! Every source of randomness in a run is derived from one root seed split
//! into labelled substreams. Components can be re-run in isolation and
//! parallel evaluation stays reproducible because each task owns a stream
//! whose seed depends only on (root, label, index), never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a hash of a byte string, used to fold stream labels into seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer; decorrelates nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for the substream `(label, index)` under `root`.
pub fn substream_seed(root: u64, label: &str, index: u64) -> u64 {
    mix(root ^ fnv1a(label.as_bytes()).rotate_left(17) ^ mix(index))
}

/// RNG for the substream `(label, index)` under `root`.
pub fn substream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(root, label, index))
}
