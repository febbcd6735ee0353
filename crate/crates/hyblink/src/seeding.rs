//! Deterministic seed derivation.
//!
//! Every random stream in the workspace is derived from one master seed plus
//! a purpose tag, so independent stages (data generation, weight init, batch
//! shuffling, jamming, channel noise) never share or reorder draws. The
//! derivation is fixed as
//!
//! ```text
//! sub_seed = splitmix64(master ^ fnv1a64(tag))
//! ```
//!
//! and is part of the on-disk reproducibility contract: the same master seed
//! and tag must yield the same stream on any platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the tag bytes.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// One round of SplitMix64; a full-period mixer over u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `tag` from a master seed.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a64(tag.as_bytes()))
}

/// Derives a per-index sub-seed (e.g. one seed per session).
pub fn derive_indexed_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive_seed(master, tag) ^ splitmix64(index))
}

/// Builds the workspace-standard RNG from a (derived) seed.
///
/// ChaCha8 is counter-based and its `seed_from_u64` expansion is documented
/// as stable across releases, which keeps persisted datasets reproducible.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive_seed(42, "gen-data"), derive_seed(42, "gen-data"));
        assert_eq!(
            derive_indexed_seed(42, "session", 7),
            derive_indexed_seed(42, "session", 7)
        );
    }

    #[test]
    fn tags_separate_streams() {
        assert_ne!(derive_seed(42, "gen-data"), derive_seed(42, "train"));
        assert_ne!(derive_seed(42, "a"), derive_seed(43, "a"));
        assert_ne!(
            derive_indexed_seed(42, "session", 0),
            derive_indexed_seed(42, "session", 1)
        );
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut a = rng_from_seed(derive_seed(1, "x"));
        let mut b = rng_from_seed(derive_seed(1, "x"));
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
