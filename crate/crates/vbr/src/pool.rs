//! Type-preserving slot arena: fixed cell storage, per-thread lists, and a
//! shared lock-free overflow pool.
//!
//! All slots are pre-allocated at construction and partitioned across the
//! declared threads; memory is never returned to the operating system. Lists
//! are intrusive, threaded through a spare per-cell word that is unused while
//! a slot holds a live node.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::cell::{NodeCell, SlotId};

/// Sentinel slot id terminating intrusive lists.
pub(crate) const NIL: SlotId = SlotId::MAX;

/// Pool tuning knobs.
#[derive(Clone, Copy, Debug)]
pub struct PoolConfig {
    /// Arena capacity is `threads * slots_per_thread`.
    pub slots_per_thread: usize,
    /// Retired list length at which the list is recycled wholesale.
    pub retired_threshold: usize,
    /// Number of slots taken from the shared pool in one steal.
    pub steal_batch: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { slots_per_thread: 4096, retired_threshold: 64, steal_batch: 32 }
    }
}

impl PoolConfig {
    /// Applies the `VBR_RETIRED_THRESHOLD` environment override, if present
    /// and parseable.
    pub fn apply_env(mut self) -> Self {
        if let Ok(v) = std::env::var("VBR_RETIRED_THRESHOLD") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    self.retired_threshold = n;
                }
            }
        }
        self
    }

    fn validate(&self) {
        debug_assert!(self.retired_threshold >= 1);
        debug_assert!(self.slots_per_thread >= self.retired_threshold + 2);
    }
}

/// Arena construction errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ArenaError {
    #[error("arena capacity is zero")]
    ZeroCapacity,
}

/// No slot available in the local lists or the shared pool. This is a sizing
/// error, distinct from the epoch-staleness restart path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no slot available in any pool")]
pub struct PoolExhausted;

/// Intrusive slot list owned by a single thread. Push and pop work at the
/// head; the tail is tracked so a whole list can be spliced in O(1).
pub struct LocalList {
    head: SlotId,
    tail: SlotId,
    len: usize,
}

impl LocalList {
    pub fn empty() -> Self {
        Self { head: NIL, tail: NIL, len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pop(&mut self, arena: &Arena) -> Option<SlotId> {
        if self.head == NIL {
            return None;
        }
        let slot = self.head;
        self.head = arena.cell(slot).pool_next.load(Ordering::SeqCst);
        if self.head == NIL {
            self.tail = NIL;
        }
        self.len -= 1;
        arena.note_unpooled(slot);
        Some(slot)
    }

    pub fn push(&mut self, arena: &Arena, slot: SlotId) {
        arena.note_pooled(slot);
        arena.cell(slot).pool_next.store(self.head, Ordering::SeqCst);
        if self.head == NIL {
            self.tail = slot;
        }
        self.head = slot;
        self.len += 1;
    }

    /// Splices all of `other` in front of this list and leaves `other` empty.
    pub fn splice_front(&mut self, arena: &Arena, other: &mut LocalList) {
        if other.head == NIL {
            return;
        }
        arena.cell(other.tail).pool_next.store(self.head, Ordering::SeqCst);
        if self.head == NIL {
            self.tail = other.tail;
        }
        self.head = other.head;
        self.len += other.len;
        other.head = NIL;
        other.tail = NIL;
        other.len = 0;
    }

    /// Detaches up to `n` slots from the head as a chain `(head, tail, len)`.
    fn detach(&mut self, arena: &Arena, n: usize) -> Option<(SlotId, SlotId, usize)> {
        if n == 0 || self.head == NIL {
            return None;
        }
        let head = self.head;
        let mut tail = head;
        let mut taken = 1;
        while taken < n {
            let next = arena.cell(tail).pool_next.load(Ordering::SeqCst);
            if next == NIL {
                break;
            }
            tail = next;
            taken += 1;
        }
        self.head = arena.cell(tail).pool_next.load(Ordering::SeqCst);
        if self.head == NIL {
            self.tail = NIL;
        }
        self.len -= taken;
        arena.cell(tail).pool_next.store(NIL, Ordering::SeqCst);
        Some((head, tail, taken))
    }

    /// Slots currently on the list, for quiescent sweeps and tests.
    pub fn iter<'a>(&'a self, arena: &'a Arena) -> impl Iterator<Item = SlotId> + 'a {
        let mut cur = self.head;
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let slot = cur;
            cur = arena.cell(slot).pool_next.load(Ordering::SeqCst);
            Some(slot)
        })
    }
}

/// Lock-free stack of slot batches. The top word packs the head slot id with
/// a modification tag so a popped-and-repushed head cannot satisfy a stale
/// compare-exchange. Batches are chained through `pool_next`; a batch head
/// records its last slot in `batch_tail`.
struct GlobalPool {
    top: AtomicU64,
}

fn pack_top(head: SlotId, tag: u32) -> u64 {
    ((tag as u64) << 32) | head as u64
}

fn unpack_top(w: u64) -> (SlotId, u32) {
    (w as u32, (w >> 32) as u32)
}

impl GlobalPool {
    fn new() -> Self {
        Self { top: AtomicU64::new(pack_top(NIL, 0)) }
    }

    fn push(&self, arena: &Arena, head: SlotId, tail: SlotId) {
        arena.cell(head).batch_tail.store(tail, Ordering::SeqCst);
        loop {
            let cur = self.top.load(Ordering::SeqCst);
            let (old_head, tag) = unpack_top(cur);
            arena.cell(tail).pool_next.store(old_head, Ordering::SeqCst);
            if self
                .top
                .compare_exchange(cur, pack_top(head, tag.wrapping_add(1)), Ordering::SeqCst, Ordering::SeqCst)
                .is_ok()
            {
                return;
            }
        }
    }

    /// Pops one whole batch. Reads between the load and the compare-exchange
    /// may observe stale chain words from a concurrently taken batch; they
    /// stay in bounds (only valid ids or NIL are ever stored) and the tag
    /// check voids any decision based on them.
    fn pop(&self, arena: &Arena) -> Option<(SlotId, SlotId)> {
        loop {
            let cur = self.top.load(Ordering::SeqCst);
            let (head, tag) = unpack_top(cur);
            if head == NIL {
                return None;
            }
            let tail = arena.cell(head).batch_tail.load(Ordering::SeqCst);
            if tail == NIL {
                continue;
            }
            let next = arena.cell(tail).pool_next.load(Ordering::SeqCst);
            if self
                .top
                .compare_exchange(cur, pack_top(next, tag.wrapping_add(1)), Ordering::SeqCst, Ordering::SeqCst)
                .is_ok()
            {
                arena.cell(tail).pool_next.store(NIL, Ordering::SeqCst);
                return Some((head, tail));
            }
        }
    }
}

/// Per-thread pool state: the allocation list and the retired list.
pub struct PoolCtx {
    pub(crate) alloc: LocalList,
    pub(crate) retired: LocalList,
}

impl PoolCtx {
    pub fn alloc_len(&self) -> usize {
        self.alloc.len()
    }

    pub fn retired_len(&self) -> usize {
        self.retired.len()
    }
}

/// Fixed-size slot storage shared by all threads of a registry.
pub struct Arena {
    cells: Box<[NodeCell]>,
    global: GlobalPool,
    threads: usize,
    config: PoolConfig,
    /// Debug membership map: true while a slot sits in some pool list.
    /// Catches double-push and double-hand-out bugs.
    #[cfg(debug_assertions)]
    pooled: Box<[std::sync::atomic::AtomicBool]>,
}

impl Arena {
    #[cfg(debug_assertions)]
    fn note_pooled(&self, slot: SlotId) {
        let was = self.pooled[slot as usize].swap(true, Ordering::SeqCst);
        debug_assert!(!was, "slot {slot} pushed to a pool it is already in");
    }

    #[cfg(not(debug_assertions))]
    fn note_pooled(&self, _slot: SlotId) {}

    #[cfg(debug_assertions)]
    fn note_unpooled(&self, slot: SlotId) {
        let was = self.pooled[slot as usize].swap(false, Ordering::SeqCst);
        debug_assert!(was, "slot {slot} popped from a pool it was not in");
    }

    #[cfg(not(debug_assertions))]
    fn note_unpooled(&self, _slot: SlotId) {}
}

impl Arena {
    /// Pre-allocates `threads * slots_per_thread` cells and chains each
    /// thread's partition into a ready-to-adopt allocation list.
    pub fn new(threads: usize, config: PoolConfig) -> Result<Self, ArenaError> {
        config.validate();
        let capacity = threads * config.slots_per_thread;
        if capacity == 0 {
            return Err(ArenaError::ZeroCapacity);
        }
        assert!(capacity < NIL as usize, "arena capacity exceeds slot id space");
        let cells: Box<[NodeCell]> = (0..capacity).map(|_| NodeCell::new()).collect();
        let arena = Self {
            cells,
            global: GlobalPool::new(),
            threads,
            config,
            // Every slot starts out chained into its partition.
            #[cfg(debug_assertions)]
            pooled: (0..capacity).map(|_| std::sync::atomic::AtomicBool::new(true)).collect(),
        };
        let spt = config.slots_per_thread;
        for t in 0..threads {
            let base = t * spt;
            for i in 0..spt - 1 {
                let slot = (base + i) as SlotId;
                arena.cell(slot).pool_next.store((base + i + 1) as SlotId, Ordering::SeqCst);
            }
            arena.cell((base + spt - 1) as SlotId).pool_next.store(NIL, Ordering::SeqCst);
        }
        Ok(arena)
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    #[inline]
    pub fn cell(&self, slot: SlotId) -> &NodeCell {
        &self.cells[slot as usize]
    }

    /// Hands out the pre-chained partition for thread `tid`. Called exactly
    /// once per tid by scheme registration.
    pub(crate) fn adopt_partition(&self, tid: usize) -> PoolCtx {
        assert!(tid < self.threads);
        let spt = self.config.slots_per_thread;
        let base = tid * spt;
        PoolCtx {
            alloc: LocalList {
                head: base as SlotId,
                tail: (base + spt - 1) as SlotId,
                len: spt,
            },
            retired: LocalList::empty(),
        }
    }

    /// Next slot to hand to an allocation, favoring sources in order: the
    /// local allocation list, the retired list once it reaches the recycle
    /// threshold, a batch stolen from the shared pool, and finally whatever
    /// the retired list still holds. Only when every source is empty does it
    /// report exhaustion.
    pub fn take_slot(&self, p: &mut PoolCtx) -> Result<SlotId, PoolExhausted> {
        if let Some(slot) = p.alloc.pop(self) {
            return Ok(slot);
        }
        if p.retired.len() >= self.config.retired_threshold {
            self.flush_retired(p);
            if let Some(slot) = p.alloc.pop(self) {
                return Ok(slot);
            }
        }
        if self.steal_batch(&mut p.alloc) {
            if let Some(slot) = p.alloc.pop(self) {
                return Ok(slot);
            }
        }
        if !p.retired.is_empty() {
            p.alloc.splice_front(self, &mut p.retired);
            if let Some(slot) = p.alloc.pop(self) {
                return Ok(slot);
            }
        }
        Err(PoolExhausted)
    }

    /// Recycles the retired list wholesale into the allocation list once it
    /// has reached the configured threshold.
    pub fn flush_retired(&self, p: &mut PoolCtx) {
        if p.retired.len() >= self.config.retired_threshold {
            p.alloc.splice_front(self, &mut p.retired);
        }
    }

    /// Moves `batch` slots from the local allocation list to the shared pool
    /// as one unit. No-op when `batch` is zero.
    pub fn donate_to_global(&self, list: &mut LocalList, batch: usize) {
        debug_assert!(batch == 0 || list.len() > batch);
        if let Some((head, tail, _)) = list.detach(self, batch) {
            self.global.push(self, head, tail);
        }
    }

    /// Takes one batch from the shared pool into `list`. Returns whether
    /// anything arrived.
    pub fn steal_batch(&self, list: &mut LocalList) -> bool {
        match self.global.pop(self) {
            Some((head, tail)) => {
                let mut cur = head;
                let mut len = 1;
                while cur != tail {
                    cur = self.cell(cur).pool_next.load(Ordering::SeqCst);
                    len += 1;
                }
                let mut batch = LocalList { head, tail, len };
                list.splice_front(self, &mut batch);
                true
            }
            None => false,
        }
    }

    /// Number of slots sitting in the shared pool. Only meaningful at
    /// quiescent points.
    pub fn global_len(&self) -> usize {
        let (mut cur, _) = unpack_top(self.global.top.load(Ordering::SeqCst));
        let mut n = 0;
        while cur != NIL {
            n += 1;
            cur = self.cell(cur).pool_next.load(Ordering::SeqCst);
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Arc;

    fn small(threads: usize, spt: usize) -> Arena {
        Arena::new(
            threads,
            PoolConfig { slots_per_thread: spt, retired_threshold: 4, steal_batch: 3 },
        )
        .unwrap()
    }

    #[test]
    fn zero_threads_is_zero_capacity() {
        assert_eq!(
            Arena::new(0, PoolConfig::default()).err(),
            Some(ArenaError::ZeroCapacity)
        );
    }

    #[test]
    fn partitions_hold_all_slots_once() {
        let arena = small(4, 8);
        assert_eq!(arena.capacity(), 32);
        let mut seen = HashSet::new();
        for t in 0..4 {
            let mut p = arena.adopt_partition(t);
            assert_eq!(p.alloc.len(), 8);
            while let Some(s) = p.alloc.pop(&arena) {
                assert!(seen.insert(s), "slot {s} appeared twice");
            }
        }
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn take_slot_prefers_local_then_flush_then_global() {
        let arena = small(2, 8);
        let mut p = arena.adopt_partition(0);

        // Local list first.
        let s = arena.take_slot(&mut p).unwrap();
        // Drain the rest of the partition.
        let mut drained = vec![s];
        while let Some(x) = p.alloc.pop(&arena) {
            drained.push(x);
        }

        // Park three on the retired list: below threshold (4), so a bare take
        // must fall through to the global pool, which is empty, then recycle
        // the out-of-band retirees as a last resort.
        for &x in &drained[..3] {
            p.retired.push(&arena, x);
        }
        let got = arena.take_slot(&mut p).unwrap();
        assert!(drained[..3].contains(&got));
        assert_eq!(p.retired.len(), 0);

        // At threshold, the flush path serves the allocation.
        let mut p2 = PoolCtx { alloc: LocalList::empty(), retired: LocalList::empty() };
        for &x in &drained[3..7] {
            p2.retired.push(&arena, x);
        }
        assert_eq!(p2.retired.len(), 4);
        let got2 = arena.take_slot(&mut p2).unwrap();
        assert!(drained[3..7].contains(&got2));
        assert_eq!(p2.retired.len(), 0);
        assert_eq!(p2.alloc.len(), 3);
    }

    #[test]
    fn exhaustion_reported_only_when_everything_empty() {
        let arena = small(1, 8);
        let mut p = arena.adopt_partition(0);
        for _ in 0..8 {
            arena.take_slot(&mut p).unwrap();
        }
        assert_eq!(arena.take_slot(&mut p), Err(PoolExhausted));
    }

    #[test]
    fn flush_below_threshold_is_noop() {
        let arena = small(1, 8);
        let mut p = arena.adopt_partition(0);
        for _ in 0..3 {
            let s = p.alloc.pop(&arena).unwrap();
            p.retired.push(&arena, s);
        }
        arena.flush_retired(&mut p);
        assert_eq!(p.retired.len(), 3);
        let s = p.alloc.pop(&arena).unwrap();
        p.retired.push(&arena, s);
        arena.flush_retired(&mut p);
        assert_eq!(p.retired.len(), 0);
        assert_eq!(p.alloc.len(), 8);
    }

    #[test]
    fn donate_and_steal_round_trip() {
        let arena = small(2, 8);
        let mut p0 = arena.adopt_partition(0);
        let mut p1 = arena.adopt_partition(1);

        arena.donate_to_global(&mut p0.alloc, 3);
        assert_eq!(p0.alloc.len(), 5);
        assert_eq!(arena.global_len(), 3);

        // Thread 1 drains its own partition, then steals the donated batch.
        while p1.alloc.pop(&arena).is_some() {}
        let got = arena.take_slot(&mut p1).unwrap();
        let _ = got;
        assert_eq!(p1.alloc.len(), 2);
        assert_eq!(arena.global_len(), 0);
    }

    #[test]
    fn donate_zero_is_noop() {
        let arena = small(1, 8);
        let mut p = arena.adopt_partition(0);
        arena.donate_to_global(&mut p.alloc, 0);
        assert_eq!(p.alloc.len(), 8);
        assert_eq!(arena.global_len(), 0);
    }

    #[test]
    fn concurrent_donors_conserve_slots() {
        let arena = Arc::new(small(4, 64));
        let mut handles = Vec::new();
        for t in 0..4 {
            let arena = Arc::clone(&arena);
            handles.push(std::thread::spawn(move || {
                let mut p = arena.adopt_partition(t);
                for _ in 0..7 {
                    arena.donate_to_global(&mut p.alloc, 8);
                }
                p.alloc.len()
            }));
        }
        let local: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(local + arena.global_len(), arena.capacity());
    }

    #[test]
    fn concurrent_stealers_get_disjoint_batches() {
        let arena = Arc::new(small(8, 64));
        {
            let mut p = arena.adopt_partition(0);
            for _ in 0..7 {
                arena.donate_to_global(&mut p.alloc, 8);
            }
        }
        let mut handles = Vec::new();
        for _ in 0..4 {
            let arena = Arc::clone(&arena);
            handles.push(std::thread::spawn(move || {
                let mut list = LocalList::empty();
                while arena.steal_batch(&mut list) {}
                list.iter(&arena).collect::<Vec<_>>()
            }));
        }
        let mut seen = HashSet::new();
        for h in handles {
            for s in h.join().unwrap() {
                assert!(seen.insert(s), "slot {s} stolen twice");
            }
        }
        assert_eq!(seen.len(), 56);
    }

    #[test]
    fn env_override_applies() {
        std::env::set_var("VBR_RETIRED_THRESHOLD", "7");
        let cfg = PoolConfig::default().apply_env();
        std::env::remove_var("VBR_RETIRED_THRESHOLD");
        assert_eq!(cfg.retired_threshold, 7);
    }
}
