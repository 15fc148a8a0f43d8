//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 stream keyed by
//! `(seed, purpose tag)`: the seed selects the key and an FNV-1a hash of the
//! tag selects the ChaCha stream id. ChaCha is a counter-based generator with
//! integer-only state updates, so streams are identical on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn stream(seed: u64, tag: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(tag));
        Rng { inner }
    }

    /// A child stream derived from this one's seed material and a sub-tag.
    pub fn fork(&mut self, tag: &str) -> Rng {
        let seed = self.inner.next_u64();
        Rng::stream(seed, tag)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    pub fn uniform_range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f32 {
        let v: f64 = StandardNormal.sample(&mut self.inner);
        v as f32
    }

    pub fn normal_tensor(&mut self, shape: &[usize], std: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal() * std).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    pub fn uniform_tensor(&mut self, shape: &[usize], lo: f32, hi: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.uniform_range(lo, hi)).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_keyed_by_seed_and_tag() {
        let a: Vec<u64> = (0..4).map(|_| Rng::stream(1, "z").next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(Rng::stream(1, "z").next_u64(), Rng::stream(1, "eps").next_u64());
        assert_ne!(Rng::stream(1, "z").next_u64(), Rng::stream(2, "z").next_u64());
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = Rng::stream(3, "p").permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
