use std::collections::BTreeMap;
use std::ops::Bound;

use ordered_float::OrderedFloat;

/// Sorted multiset of window values.
///
/// Quantile and tail queries walk from the nearer end, which keeps them cheap
/// for the extreme quantiles the estimator asks for and for low-cardinality
/// data such as small integer counts.
#[derive(Debug, Clone, Default)]
pub struct SortedWindow {
    counts: BTreeMap<OrderedFloat<f64>, usize>,
    len: usize,
}

impl SortedWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, x: f64) {
        *self.counts.entry(OrderedFloat(x)).or_insert(0) += 1;
        self.len += 1;
    }

    /// Removes one copy of `x`. Returns false if it was not present.
    pub fn remove(&mut self, x: f64) -> bool {
        let key = OrderedFloat(x);
        match self.counts.get_mut(&key) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.counts.remove(&key);
            }
            None => return false,
        }
        self.len -= 1;
        true
    }

    pub fn min(&self) -> Option<f64> {
        self.counts.keys().next().map(|k| k.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.counts.keys().next_back().map(|k| k.0)
    }

    /// Element with zero-based rank `idx` in ascending order.
    pub fn nth(&self, idx: usize) -> Option<f64> {
        if idx >= self.len {
            return None;
        }
        if idx < self.len / 2 {
            let mut seen = 0;
            for (k, &c) in &self.counts {
                seen += c;
                if idx < seen {
                    return Some(k.0);
                }
            }
        } else {
            let from_top = self.len - 1 - idx;
            let mut seen = 0;
            for (k, &c) in self.counts.iter().rev() {
                seen += c;
                if from_top < seen {
                    return Some(k.0);
                }
            }
        }
        None
    }

    /// Nearest-rank quantile: the element at zero-based rank `⌊p·n⌋`,
    /// clamped to the last element.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        if self.len == 0 {
            return None;
        }
        Some(
            self.nth(quantile_rank(p, self.len))
                .expect("rank within bounds"),
        )
    }

    /// Values strictly above `t`, as `(value, multiplicity)` pairs.
    pub fn above(&self, t: f64) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.counts
            .range((Bound::Excluded(OrderedFloat(t)), Bound::Unbounded))
            .map(|(k, &c)| (k.0, c))
    }

    /// Values strictly below `t`, as `(value, multiplicity)` pairs.
    pub fn below(&self, t: f64) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.counts
            .range((Bound::Unbounded, Bound::Excluded(OrderedFloat(t))))
            .map(|(k, &c)| (k.0, c))
    }
}

/// Zero-based nearest-rank index for probability `p` over `n > 0` values.
pub(crate) fn quantile_rank(p: f64, n: usize) -> usize {
    let idx = (p.clamp(0.0, 1.0) * n as f64).floor() as usize;
    idx.min(n - 1)
}
