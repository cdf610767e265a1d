//! Binary prefix-sum tree over nonnegative slot rates.
//!
//! Internal nodes are recomputed from their children on every update rather
//! than patched with deltas, so the tree after any sequence of updates is
//! bit-identical to one built from scratch on the same leaves.

#[derive(Clone, Debug, PartialEq)]
pub struct SumTree {
    len: usize,
    cap: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    #[must_use]
    pub fn new(leaves: &[f64]) -> Self {
        let len = leaves.len();
        let cap = len.max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * cap];
        nodes[cap..cap + len].copy_from_slice(leaves);
        for i in (1..cap).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { len, cap, nodes }
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.len
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[must_use]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[must_use]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.cap..self.cap + self.len]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(i < self.len);
        let mut k = self.cap + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf index `i` with `prefix(i) <= target < prefix(i + 1)`, skipping
    /// zero-rate leaves. `target` must lie in `[0, total)`.
    #[must_use]
    pub fn search(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.nodes[2 * k];
            if target < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        let mut i = k - self.cap;
        // Rounding can land the search on a trailing zero leaf.
        while i > 0 && (i >= self.len || self.nodes[self.cap + i] <= 0.0) {
            i -= 1;
        }
        i
    }
}
