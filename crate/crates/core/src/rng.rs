//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! whose 64-bit seed is derived from the run seed with [`mix`], so streams
//! never depend on processing order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the UTF-8 bytes of a key.
pub fn fnv1a(key: &str) -> u64 {
    key.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive a sub-seed: `splitmix64(base ^ splitmix64(stream))`.
pub fn mix(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

pub fn stream(base: u64, stream_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, stream_id))
}

/// Stream names used across the crate, kept distinct so that, e.g., the
/// epoch shuffles never share a stream with parameter init.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const SHUFFLE_BASE: u64 = 1 << 32;
}
