//! Seed bookkeeping for reproducible, independently replayable streams.
//!
//! Every simulated object (a bank path, a bank record, a benchmark path) owns
//! a ChaCha8 stream seeded from a 64-bit value derived from the experiment's
//! base seed, a [`StreamKind`] tag and an index:
//!
//! ```text
//! seed = mix(base_seed) XOR (kind << 56 | index)      index < 2^56
//! ```
//!
//! For a fixed base seed the map `(kind, index) -> seed` is injective, and
//! different kinds occupy disjoint subspaces, so path `i` can be regenerated
//! in isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Largest index addressable within one stream kind.
pub const MAX_STREAM_INDEX: u64 = (1 << 56) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamKind {
    /// Subordinator-only bank paths (the `omega_0`-type draws).
    BankSubordinator = 1,
    /// Clock of a bank convolution record.
    RecordSubordinator = 2,
    /// Gaussian increments of a bank convolution record.
    RecordGaussian = 3,
    /// Clock of a benchmark path.
    BenchmarkSubordinator = 4,
    /// Gaussian increments of a benchmark path.
    BenchmarkGaussian = 5,
    /// Free-standing draws (sampler validation and tests).
    Validation = 6,
}

/// SplitMix64 finalizer; a bijection on `u64`.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `(kind, index)` under `base_seed`.
pub fn derive_seed(base_seed: u64, kind: StreamKind, index: u64) -> u64 {
    assert!(index <= MAX_STREAM_INDEX, "stream index {index} out of range");
    mix(base_seed) ^ (((kind as u64) << 56) | index)
}

pub fn stream_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
