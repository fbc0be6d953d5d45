//! Seed derivation and named random streams.
//!
//! Every run owns one master seed. Independent consumers (feedback noise,
//! selector fallbacks) draw from distinct ChaCha streams of that seed so a
//! change in one consumer never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream carrying environment noise and index sampling.
pub const NOISE_STREAM: u64 = 0;
/// Stream carrying selector fallback randomness.
pub const FALLBACK_STREAM: u64 = 1;

/// Returns a generator on `stream` of the given seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable per-run seed from a master seed, a cell key and a replication index.
///
/// The key is hashed by content, so inserting or reordering cells leaves the
/// seeds of existing cells untouched. The mapping is fixed across platforms
/// and releases.
pub fn derive_seed(master: u64, cell_key: &str, run: u64) -> u64 {
    let h = splitmix64(master ^ fnv1a(cell_key.as_bytes()));
    splitmix64(h ^ splitmix64(run.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
