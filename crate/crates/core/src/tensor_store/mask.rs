use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Zero-traffic OD pairs. All indices are 0-based internally.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparsityMask {
    nodes: usize,
    zero_pairs: BTreeSet<(usize, usize)>,
    per_interval: BTreeSet<(usize, usize, usize)>,
}

impl SparsityMask {
    pub fn empty(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }

    pub fn new(
        nodes: usize,
        zero_pairs: impl IntoIterator<Item = (usize, usize)>,
        per_interval: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Self::empty(nodes);
        for (i, j) in zero_pairs {
            mask.insert_pair(i, j)?;
        }
        for (i, j, k) in per_interval {
            mask.insert_interval(i, j, k)?;
        }
        Ok(mask)
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.nodes || j >= self.nodes {
            return Err(Error::Range(format!(
                "mask entry ({}, {}) outside 1..={}",
                i + 1,
                j + 1,
                self.nodes
            )));
        }
        Ok(())
    }

    pub fn insert_pair(&mut self, i: usize, j: usize) -> Result<()> {
        self.check(i, j)?;
        self.zero_pairs.insert((i, j));
        Ok(())
    }

    pub fn insert_interval(&mut self, i: usize, j: usize, k: usize) -> Result<()> {
        self.check(i, j)?;
        self.per_interval.insert((i, j, k));
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn zero_pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.zero_pairs
    }

    pub fn per_interval(&self) -> &BTreeSet<(usize, usize, usize)> {
        &self.per_interval
    }

    pub fn is_empty(&self) -> bool {
        self.zero_pairs.is_empty() && self.per_interval.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        self.zero_pairs.contains(&(i, j)) || self.per_interval.contains(&(i, j, k))
    }

    /// Largest interval index referenced by an interval-specific entry.
    pub fn max_interval(&self) -> Option<usize> {
        self.per_interval.iter().map(|&(_, _, k)| k).max()
    }

    /// The zero set of interval `k`: time-invariant pairs plus that
    /// interval's own entries.
    pub fn interval(&self, k: usize) -> IntervalMask {
        let mut view = IntervalMask::empty(self.nodes);
        for &(i, j) in &self.zero_pairs {
            view.set(i, j, true);
        }
        for &(i, j, _) in self.per_interval.iter().filter(|e| e.2 == k) {
            view.set(i, j, true);
        }
        view
    }
}

/// Zero set of a single interval, stored column-major like the traffic
/// matrices so that it can be indexed by 0-based OD index directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalMask {
    nodes: usize,
    zero: Vec<bool>,
}

impl IntervalMask {
    pub fn empty(nodes: usize) -> Self {
        Self {
            nodes,
            zero: vec![false; nodes * nodes],
        }
    }

    pub fn full(nodes: usize) -> Self {
        Self {
            nodes,
            zero: vec![true; nodes * nodes],
        }
    }

    pub fn from_od_flags(nodes: usize, zero: Vec<bool>) -> Self {
        assert_eq!(zero.len(), nodes * nodes);
        Self { nodes, zero }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.zero[j * self.nodes + i] = on;
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.zero[j * self.nodes + i]
    }

    /// Membership by 0-based column-stacked OD index.
    #[inline]
    pub fn contains_od(&self, n: usize) -> bool {
        self.zero[n]
    }

    pub fn flags(&self) -> &[bool] {
        &self.zero
    }

    pub fn len(&self) -> usize {
        self.zero.iter().filter(|&&z| z).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.zero.iter().any(|&z| z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_view_unions_entries() {
        let mask = SparsityMask::new(3, [(0, 1)], [(2, 2, 4), (1, 0, 3)]).unwrap();
        let v4 = mask.interval(4);
        assert!(v4.contains(0, 1) && v4.contains(2, 2) && !v4.contains(1, 0));
        assert_eq!(v4.len(), 2);
        let v0 = mask.interval(0);
        assert_eq!(v0.len(), 1);
        assert!(v0.contains_od(3));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparsityMask::new(2, [(2, 0)], []).is_err());
    }
}
