//! Hash table of independent sorted-list buckets.

use std::sync::Arc;

use crate::cell::Key;
use crate::pool::PoolExhausted;
use crate::reclaim::Reclaimer;
use crate::structures::{Set, VList};

pub struct VHashTable<R: Reclaimer> {
    buckets: Vec<VList<R>>,
    mask: u64,
}

impl<R: Reclaimer> VHashTable<R> {
    /// Creates a table with `buckets` rounded up to a power of two. The
    /// sentinels of every bucket are allocated from `ctx`.
    pub fn new(r: Arc<R>, ctx: &mut R::Ctx, buckets: usize) -> Result<Self, PoolExhausted> {
        let n = buckets.max(1).next_power_of_two();
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(VList::new(Arc::clone(&r), ctx)?);
        }
        Ok(Self { buckets: v, mask: (n - 1) as u64 })
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    fn bucket(&self, key: Key) -> &VList<R> {
        // Fibonacci multiplier; the low bits stay uniform after masking.
        let h = (key as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) & self.mask;
        &self.buckets[h as usize]
    }

    /// Keys of all buckets, sorted. Only meaningful while no other thread
    /// is operating on the table.
    pub fn quiescent_keys(&self, ctx: &mut R::Ctx) -> Vec<Key> {
        let mut out = Vec::new();
        for b in &self.buckets {
            out.extend(b.quiescent_keys(ctx));
        }
        out.sort_unstable();
        out
    }

    #[cfg(test)]
    pub(crate) fn quiescent_marked(&self, ctx: &mut R::Ctx) -> usize {
        self.buckets.iter().map(|b| b.quiescent_marked(ctx)).sum()
    }
}

impl<R: Reclaimer> Set<R> for VHashTable<R> {
    fn add(&self, ctx: &mut R::Ctx, key: Key) -> Result<bool, PoolExhausted> {
        self.bucket(key).add(ctx, key)
    }

    fn remove(&self, ctx: &mut R::Ctx, key: Key) -> bool {
        self.bucket(key).remove(ctx, key)
    }

    fn contains(&self, ctx: &mut R::Ctx, key: Key) -> bool {
        self.bucket(key).contains(ctx, key)
    }
}
