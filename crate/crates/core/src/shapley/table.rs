use std::collections::BTreeMap;

use crate::model::full_mask;

/// Known values of v over coalition masks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueTable {
    n: usize,
    values: BTreeMap<u32, f64>,
}

impl ValueTable {
    pub fn new(n: usize) -> Self {
        ValueTable {
            n,
            values: BTreeMap::new(),
        }
    }

    /// Complete table with `v(mask) = f(mask)` for every subset.
    pub fn from_fn(n: usize, mut f: impl FnMut(u32) -> f64) -> Self {
        let mut t = Self::new(n);
        for mask in 0..=full_mask(n) {
            t.insert(mask, f(mask));
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, mask: u32, value: f64) {
        debug_assert!(mask <= full_mask(self.n));
        self.values.insert(mask, value);
    }

    pub fn get(&self, mask: u32) -> Option<f64> {
        self.values.get(&mask).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() as u64 == 1u64 << self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().map(|(&m, &v)| (m, v))
    }
}
