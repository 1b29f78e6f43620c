//! Reference set semantics.

use std::collections::BTreeSet;

use crate::cell::Key;

/// Plain ordered set with the same result conventions as the concurrent
/// structures.
#[derive(Clone, Debug, Default)]
pub struct OracleSet(BTreeSet<Key>);

impl OracleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// `true` when the key was newly inserted.
    pub fn add(&mut self, key: Key) -> bool {
        self.0.insert(key)
    }

    /// `true` when the key was present.
    pub fn remove(&mut self, key: Key) -> bool {
        self.0.remove(&key)
    }

    pub fn contains(&self, key: Key) -> bool {
        self.0.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> Vec<Key> {
        self.0.iter().copied().collect()
    }
}
