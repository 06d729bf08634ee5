//! Seeded random streams.
//!
//! All randomness comes from `rand_pcg::Pcg64` (PCG-XSL-RR 128/64) seeded
//! through `SeedableRng::seed_from_u64`. Sub-streams are keyed by mixing
//! their identifiers with the SplitMix64 finalizer, and shuffles use a
//! descending Fisher–Yates pass that draws `j = ⌊u64 · (i + 1) / 2^64⌋`.
//! Those three rules are all another implementation needs to reproduce a
//! class order or sample stream.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

pub type StreamRng = Pcg64;

pub fn stream(seed: u64) -> StreamRng {
    Pcg64::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds identifiers into a single sub-stream seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Uniform index in `0..bound` by 128-bit widening multiply.
pub fn index_below(rng: &mut impl RngCore, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

pub fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

pub fn normal_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Uniform draw on the unit sphere of `R^dim`.
pub fn unit_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation_and_deterministic() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b = a.clone();
        shuffle(&mut a, &mut stream(1993));
        shuffle(&mut b, &mut stream(1993));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(a, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_eq!(derive_seed(&[7, 9]), derive_seed(&[7, 9]));
    }

    #[test]
    fn unit_vectors_have_unit_norm() {
        let mut rng = stream(3);
        for _ in 0..20 {
            let v = unit_vec(&mut rng, 16);
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
