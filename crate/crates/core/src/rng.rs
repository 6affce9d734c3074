//! Deterministic random streams.
//!
//! Every random draw in the crate comes from xoshiro256** seeded through
//! splitmix64, so a `(seed, domain, index)` triple always yields the same
//! numbers regardless of thread schedule or evaluation order.

use rand_core::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tags separating independent uses of one user seed.
pub mod domain {
    pub const SPLIT: u64 = 1;
    pub const CAL_U: u64 = 2;
    pub const TEST_U: u64 = 3;
    pub const SYNTH: u64 = 4;
    pub const SYNTH_SHIFT: u64 = 5;
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// splitmix64 generator, used only to expand seeds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }
}

/// xoshiro256** (Blackman & Vigna).
#[derive(Debug, Clone)]
pub struct Xoshiro256StarStar {
    s: [u64; 4],
}

impl Xoshiro256StarStar {
    /// Fills the 256-bit state with four consecutive splitmix64 outputs.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Self { s }
    }

    /// Generator for one element of a keyed family.
    pub fn keyed(seed: u64, domain: u64, index: u64) -> Self {
        Self::seed_from_u64(derive_seed(derive_seed(seed, domain), index))
    }

    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw on [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `0..bound` (Lemire's widening multiply with rejection).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let mut m = u128::from(self.next()) * u128::from(bound);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = u128::from(self.next()) * u128::from(bound);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for Xoshiro256StarStar {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Derives an independent child seed from `seed` and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// The per-sample randomization draw `u` for sample `index`.
pub fn keyed_uniform(seed: u64, domain: u64, index: u64) -> f64 {
    Xoshiro256StarStar::keyed(seed, domain, index).next_f64()
}

/// Fisher–Yates shuffle of `0..n`, walking from the last position down.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    // First outputs of splitmix64 seeded with 1234567, from the reference C
    // implementation.
    #[test]
    fn splitmix_reference_vector() {
        let mut sm = SplitMix64::new(1_234_567);
        let got: Vec<u64> = (0..5).map(|_| sm.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                6_457_827_717_110_365_317,
                3_203_168_211_198_807_973,
                9_817_491_932_198_370_423,
                4_593_380_528_125_082_431,
                16_408_922_859_458_223_821,
            ]
        );
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(7);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(9);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(rng.below(bound) < bound);
            }
        }
    }

    #[test]
    fn keyed_streams_are_order_independent() {
        let forward: Vec<f64> = (0..50).map(|i| keyed_uniform(3, domain::CAL_U, i)).collect();
        let backward: Vec<f64> = (0..50)
            .rev()
            .map(|i| keyed_uniform(3, domain::CAL_U, i))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(forward, backward);
        assert_ne!(keyed_uniform(3, domain::CAL_U, 0), keyed_uniform(3, domain::TEST_U, 0));
    }

    #[test]
    fn permutation_is_a_permutation() {
        for n in [0usize, 1, 2, 17, 100] {
            let mut p = permutation(n, 11);
            p.sort_unstable();
            assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }
}
