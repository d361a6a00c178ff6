//! Counter-hashed seed derivation.
//!
//! Every random stream is identified by `(master_seed, run_index, role)` and
//! seeded with a SplitMix64 hash of that triple, so runs can execute in any
//! order (or in parallel) and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete generator used for every stream.
pub type Stream = ChaCha8Rng;

/// What a stream is used for. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    Topology = 1,
    RegressorPowers = 2,
    Regressors = 3,
    Noise = 4,
    Parameter = 5,
    Init = 6,
    Analysis = 7,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, run: u64, role: StreamRole) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ run) ^ (role as u64))
}

pub fn stream(master: u64, run: u64, role: StreamRole) -> Stream {
    Stream::seed_from_u64(derive_seed(master, run, role))
}
