//! Seeded RNG substreams.
//!
//! Every run derives all of its randomness from one root seed through named
//! substreams (`backbone`, `adversarial`, `data`, ...), so a single component
//! can be re-run in isolation and still see the same stream it saw inside the
//! full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for the substream `name` under `root`.
pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    substream_indexed(root, name, 0)
}

/// Indexed variant for per-layer or per-replicate streams.
pub fn substream_indexed(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    let seed = splitmix64(root ^ fnv1a(name) ^ splitmix64(index));
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child root seed, for handing a whole substream tree to a component.
pub fn child_seed(root: u64, name: &str, index: u64) -> u64 {
    splitmix64(root ^ fnv1a(name) ^ splitmix64(index))
}
