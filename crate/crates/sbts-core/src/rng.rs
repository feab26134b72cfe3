//! Deterministic RNG stream derivation. Every stream is keyed by the run seed
//! plus structural indices, so results are independent of thread count.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// splitmix64 finalizer; good avalanche for combining key parts.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed and stream indices into a derived 64-bit seed.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut state = mix(seed);
    for (i, p) in parts.iter().enumerate() {
        state = mix(state ^ p.wrapping_mul(mix(i as u64 + 1)));
    }
    state
}

/// Derive a generator from a seed and up to a few stream indices.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(1, &[0]).gen();
        let b: u64 = stream(1, &[0]).gen();
        let c: u64 = stream(1, &[1]).gen();
        let d: u64 = stream(2, &[0]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
