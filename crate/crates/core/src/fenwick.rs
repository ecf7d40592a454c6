//! Integer Fenwick (binary indexed) tree over per-site weights, supporting
//! `O(log n)` point updates and weighted sampling by prefix-sum descent.
//!
//! Weights are occupancy counts, so everything stays in exact integer
//! arithmetic; the event engine's periodic audits compare the tree total
//! against a recomputed field total for exact equality.

/// 1-indexed Fenwick tree with `i64` weights.
#[derive(Debug, Clone)]
pub struct FenwickTree {
    tree: Vec<i64>,
    len: usize,
    total: i64,
}

impl FenwickTree {
    pub fn with_len(len: usize) -> Self {
        Self {
            tree: vec![0; len + 1],
            len,
            total: 0,
        }
    }

    pub fn from_weights(weights: &[i64]) -> Self {
        let mut t = Self::with_len(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            t.add(i, w);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> i64 {
        self.total
    }

    /// Adds `delta` to the weight at `index`.
    #[inline]
    pub fn add(&mut self, index: usize, delta: i64) {
        debug_assert!(index < self.len);
        self.total += delta;
        let mut i = index + 1;
        while i <= self.len {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of weights at indices `0..=index`.
    pub fn prefix_sum(&self, index: usize) -> i64 {
        debug_assert!(index < self.len);
        let mut i = index + 1;
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Weight at a single index.
    pub fn weight(&self, index: usize) -> i64 {
        let above = self.prefix_sum(index);
        if index == 0 {
            above
        } else {
            above - self.prefix_sum(index - 1)
        }
    }

    /// Finds the index owning position `target` in the cumulative-weight
    /// order, for `target` in `[0, total)`. Returns `(index, offset)` where
    /// `offset = target - prefix_before(index)` lies in `[0, weight(index))`.
    #[inline]
    pub fn sample(&self, target: i64) -> (usize, i64) {
        debug_assert!(target >= 0 && target < self.total);
        let mut idx = 0usize;
        let mut rem = target;
        let mut step = self.len.next_power_of_two();
        while step > 0 {
            let next = idx + step;
            if next <= self.len && self.tree[next] <= rem {
                rem -= self.tree[next];
                idx = next;
            }
            step >>= 1;
        }
        (idx, rem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prefix_sums_and_weights() {
        let t = FenwickTree::from_weights(&[3, 0, 5, 1]);
        assert_eq!(t.total(), 9);
        assert_eq!(t.prefix_sum(0), 3);
        assert_eq!(t.prefix_sum(2), 8);
        assert_eq!(t.weight(2), 5);
        assert_eq!(t.weight(1), 0);
    }

    #[test]
    fn sample_covers_every_unit_of_weight() {
        let weights = [2i64, 0, 3, 1, 0, 4];
        let t = FenwickTree::from_weights(&weights);
        let mut hits = vec![0i64; weights.len()];
        for target in 0..t.total() {
            let (idx, off) = t.sample(target);
            assert!(off >= 0 && off < weights[idx]);
            hits[idx] += 1;
        }
        assert_eq!(hits, weights.to_vec());
    }

    #[test]
    fn updates_keep_sampling_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 257; // deliberately not a power of two
        let mut reference = vec![0i64; n];
        let mut tree = FenwickTree::with_len(n);
        for _ in 0..10_000 {
            let i = rng.gen_range(0..n);
            let delta = if reference[i] > 0 && rng.gen_bool(0.4) {
                -rng.gen_range(1..=reference[i])
            } else {
                rng.gen_range(1..4)
            };
            reference[i] += delta;
            tree.add(i, delta);
        }
        assert_eq!(tree.total(), reference.iter().sum::<i64>());
        for (i, &w) in reference.iter().enumerate() {
            assert_eq!(tree.weight(i), w, "weight mismatch at {i}");
        }
        for target in (0..tree.total()).step_by(97) {
            let (idx, off) = tree.sample(target);
            assert!(off < reference[idx]);
            let before: i64 = reference[..idx].iter().sum();
            assert_eq!(before + off, target);
        }
    }
}
