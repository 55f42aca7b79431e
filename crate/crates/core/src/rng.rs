//! Deterministic RNG construction and stream derivation.
//!
//! Every randomized operation in this crate takes either a seed or an
//! explicit `&mut impl Rng`, so (seed, inputs) fully determine results
//! regardless of how work is scheduled.

use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The RNG used throughout the crate.
pub type Stream = Xoshiro256PlusPlus;

/// RNG seeded directly from a 64-bit seed.
pub fn seeded(seed: u64) -> Stream {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent sub-stream `tag` of a master seed.
///
/// Used wherever several random streams must be derived from one
/// experiment seed (per-layer init, AIS chains, Monte-Carlo replicates,
/// grid members) so that results do not depend on evaluation order.
pub fn substream(seed: u64, tag: u64) -> Stream {
    Xoshiro256PlusPlus::seed_from_u64(mix(seed, tag))
}

// SplitMix64 finalizer over seed and tag; bijective in each argument.
fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_stable_and_distinct() {
        let a: u64 = substream(7, 0).gen();
        let b: u64 = substream(7, 1).gen();
        let a2: u64 = substream(7, 0).gen();
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }
}
