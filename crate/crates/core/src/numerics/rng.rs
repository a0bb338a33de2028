use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A seeded random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto ChaCha's native stream
/// selector, so `(seed, stream_id)` fixes the output sequence on every
/// platform.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngState {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream labelled `k`. Does not advance `self`; the child id is
    /// always different from the parent's.
    pub fn split(&self, k: u64) -> RngState {
        let mut id = splitmix64(self.stream_id ^ splitmix64(k.wrapping_add(1)));
        if id == self.stream_id {
            id = id.wrapping_add(1);
        }
        RngState::with_stream(self.seed, id)
    }

    /// Stream keyed by a path of labels, e.g. `(sample, level, draw)`.
    pub fn derive(seed: u64, labels: &[u64]) -> RngState {
        let mut state = RngState::new(seed);
        for &l in labels {
            state = state.split(l);
        }
        state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_of_large_numbers() {
        let mut rng = RngState::new(1);
        let xs = rng.gaussian_vec(1_000_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn same_seed_same_draws() {
        let a = RngState::new(1).gaussian_vec(3);
        let b = RngState::new(1).gaussian_vec(3);
        assert_eq!(a, b);
        assert!(RngState::new(1).gaussian_vec(0).is_empty());
    }

    #[test]
    fn streams_differ() {
        let a = RngState::with_stream(1, 0).gaussian_vec(100);
        let b = RngState::with_stream(1, 1).gaussian_vec(100);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn split_children_are_distinct_from_parent_and_each_other() {
        let parent = RngState::new(9);
        let mut ids = vec![parent.stream_id()];
        for k in 0..64 {
            ids.push(parent.split(k).stream_id());
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());

        let p: Vec<u64> = (0..16).map(|_| parent.clone().next_u64()).collect();
        let mut child = parent.split(0);
        let c: Vec<u64> = (0..16).map(|_| child.next_u64()).collect();
        assert_ne!(p, c);
    }

    // Frozen output of the generator; a change here breaks reproducibility of
    // every stored artifact.
    #[test]
    fn committed_test_vectors() {
        let mut r = RngState::new(1);
        let got: Vec<u64> = (0..4).map(|_| r.next_u64()).collect();
        assert_eq!(got, TEST_VECTOR_SEED1_STREAM0);
        let mut r = RngState::with_stream(1, 7);
        assert_eq!(r.next_u64(), TEST_VECTOR_SEED1_STREAM7);
    }

    const TEST_VECTOR_SEED1_STREAM0: [u64; 4] = [
        7424550030962593201,
        1482817706323250795,
        11004592982271133285,
        4045824405258374466,
    ];
    const TEST_VECTOR_SEED1_STREAM7: u64 = 8577810123518004597;

    #[test]
    fn shuffle_is_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        RngState::new(3).shuffle(&mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
