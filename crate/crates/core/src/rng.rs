//! Seeded random streams and the samplers built on them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic random stream keyed by a 64-bit seed.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with tags (node id, round, ...) into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(0x632b_e59b_d9b4_e019))))
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for a sub-task, e.g. `(seed, round, node)`.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        Self::new(derive_seed(seed, tags))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let range = n as u64;
        let mut m = (self.next_u64() as u128) * (range as u128);
        if (m as u64) < range {
            let threshold = range.wrapping_neg() % range;
            while (m as u64) < threshold {
                m = (self.next_u64() as u128) * (range as u128);
            }
        }
        (m >> 64) as usize
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Random sign, `+1` or `-1`.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws `k` distinct indices out of `0..n`, returned in ascending order.
///
/// Partial Fisher-Yates over an index buffer that is restored after every
/// draw, so each draw costs `O(k log k)` and a single draw with `k = 1`
/// returns exactly `rng.below(n)`.
#[derive(Clone, Debug)]
pub struct SubsetSampler {
    pool: Vec<usize>,
    swaps: Vec<usize>,
    out: Vec<usize>,
}

impl SubsetSampler {
    pub fn new(n: usize) -> Self {
        Self { pool: (0..n).collect(), swaps: Vec::new(), out: Vec::new() }
    }

    pub fn draw(&mut self, rng: &mut Rng, k: usize) -> &[usize] {
        let n = self.pool.len();
        assert!(k <= n, "subset larger than population");
        self.swaps.clear();
        for t in 0..k {
            let j = t + rng.below(n - t);
            self.pool.swap(t, j);
            self.swaps.push(j);
        }
        self.out.clear();
        self.out.extend_from_slice(&self.pool[..k]);
        for (t, &j) in self.swaps.iter().enumerate().rev() {
            self.pool.swap(t, j);
        }
        self.out.sort_unstable();
        &self.out
    }
}

/// Inverse-CDF sampler over `{1, ..., m}` with weights `w_t`.
#[derive(Clone, Debug)]
pub struct DiscreteSampler {
    cdf: Vec<f64>,
}

impl DiscreteSampler {
    /// Weights for `t = 1..=m`, given in order.
    pub fn from_weights(weights: &[f64]) -> Self {
        assert!(!weights.is_empty(), "no outcomes");
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|&w| {
                assert!(w >= 0.0 && w.is_finite(), "bad weight {w}");
                acc += w;
                acc
            })
            .collect::<Vec<_>>();
        assert!(acc > 0.0, "all weights zero");
        Self { cdf }
    }

    /// Inner-loop length law `P(t) = (1 - nu h)^(m - t) / beta`.
    pub fn geometric(m: usize, decay: f64) -> Self {
        assert!(m >= 1, "m must be positive");
        let q = 1.0 - decay;
        let weights = (1..=m).map(|t| q.powf((m - t) as f64)).collect::<Vec<_>>();
        Self::from_weights(&weights)
    }

    pub fn uniform(m: usize) -> Self {
        Self::from_weights(&vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// Probability of outcome `t` (1-based).
    pub fn prob(&self, t: usize) -> f64 {
        let total = *self.cdf.last().unwrap();
        let lo = if t >= 2 { self.cdf[t - 2] } else { 0.0 };
        (self.cdf[t - 1] - lo) / total
    }

    /// Draws an outcome in `1..=m`.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cdf.last().unwrap();
        let u = rng.uniform() * total;
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(9);
        let mut b = Rng::new(9);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(1, &[0, 1]).next_u64();
        let b = Rng::derive(1, &[1, 0]).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Rng::new(3);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[r.below(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn subsets_are_sorted_and_distinct() {
        let mut r = Rng::new(5);
        let mut s = SubsetSampler::new(20);
        for k in [0, 1, 5, 20] {
            let got = s.draw(&mut r, k).to_vec();
            assert_eq!(got.len(), k);
            assert!(got.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn discrete_probabilities() {
        let s = DiscreteSampler::from_weights(&[1.0, 3.0]);
        assert!((s.prob(1) - 0.25).abs() < 1e-15);
        assert!((s.prob(2) - 0.75).abs() < 1e-15);
        let u = DiscreteSampler::geometric(4, 0.0);
        assert!((u.prob(3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn discrete_sample_support() {
        let s = DiscreteSampler::from_weights(&[0.0, 1.0, 0.0]);
        let mut r = Rng::new(1);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut r), 2);
        }
    }
}
