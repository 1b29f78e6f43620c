//! No reclamation: retired slots are never reused.
//!
//! The upper bound for raw throughput and the lower bound for memory
//! behaviour. Every operation is wait-free with respect to the reclamation
//! layer because there is none; the arena simply runs dry.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::cell::{Key, LinkState, NodeRef, SlotId};
use crate::pool::{Arena, ArenaError, PoolConfig, PoolCtx, PoolExhausted};
use crate::reclaim::{Outcome, Reclaimer};

pub struct LeakCtx {
    tid: usize,
    pool: PoolCtx,
    /// Slots handed to `retire`, kept so the arena census still balances.
    leaked: Vec<SlotId>,
    retires: u64,
}

impl LeakCtx {
    pub fn tid(&self) -> usize {
        self.tid
    }

    pub fn leaked_len(&self) -> usize {
        self.leaked.len()
    }

    pub fn retires(&self) -> u64 {
        self.retires
    }
}

pub struct NoRecl {
    arena: Arena,
    registered: AtomicUsize,
}

impl NoRecl {
    pub fn new(threads: usize, config: PoolConfig) -> Result<Self, ArenaError> {
        Ok(Self { arena: Arena::new(threads, config)?, registered: AtomicUsize::new(0) })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }
}

impl Reclaimer for NoRecl {
    type Ctx = LeakCtx;

    fn register(&self) -> LeakCtx {
        let tid = self.registered.fetch_add(1, Ordering::SeqCst);
        assert!(tid < self.arena.threads(), "more registrations than configured threads");
        LeakCtx { tid, pool: self.arena.adopt_partition(tid), leaked: Vec::new(), retires: 0 }
    }

    fn checkpoint_install(&self, _ctx: &mut LeakCtx) {}

    fn rollback(&self, _ctx: &mut LeakCtx) {}

    fn end_op(&self, _ctx: &mut LeakCtx) {}

    fn alloc(&self, ctx: &mut LeakCtx, key: Key) -> Result<Outcome<NodeRef>, PoolExhausted> {
        let slot = self.arena.take_slot(&mut ctx.pool)?;
        let cell = self.arena.cell(slot);
        // Slots are never reused, so this store is uncontended.
        cell.link.store(LinkState::null(0));
        cell.key.store(key, Ordering::SeqCst);
        Ok(Ok(NodeRef { slot, birth: 0 }))
    }

    fn abandon(&self, ctx: &mut LeakCtx, n: NodeRef) {
        ctx.pool.alloc.push(&self.arena, n.slot);
    }

    fn note_published(&self, _ctx: &mut LeakCtx, _n: NodeRef) {}

    fn record_pending_retire(&self, _ctx: &mut LeakCtx, _n: NodeRef) {}

    fn retire(&self, ctx: &mut LeakCtx, n: NodeRef) -> Outcome<()> {
        ctx.leaked.push(n.slot);
        ctx.retires += 1;
        Ok(())
    }

    fn get_next(&self, _ctx: &mut LeakCtx, n: NodeRef) -> Outcome<Option<NodeRef>> {
        let link = self.arena.cell(n.slot).link.load();
        Ok(link.target.map(|s| NodeRef { slot: s, birth: 0 }))
    }

    fn get_key(&self, _ctx: &mut LeakCtx, n: NodeRef) -> Outcome<Key> {
        Ok(self.arena.cell(n.slot).key.load(Ordering::SeqCst))
    }

    fn is_marked(&self, n: NodeRef) -> bool {
        self.arena.cell(n.slot).link.load().marked
    }

    fn update_link(&self, n: NodeRef, expected: Option<NodeRef>, new: Option<NodeRef>) -> bool {
        let cur = LinkState { target: expected.map(|r| r.slot), marked: false, version: 0 };
        let next = LinkState { target: new.map(|r| r.slot), marked: false, version: 0 };
        self.arena.cell(n.slot).link.compare_exchange(cur, next)
    }

    fn mark(&self, n: NodeRef) -> bool {
        let link = self.arena.cell(n.slot).link.load();
        let cur = LinkState { target: link.target, marked: false, version: 0 };
        let next = LinkState { target: link.target, marked: true, version: 0 };
        self.arena.cell(n.slot).link.compare_exchange(cur, next)
    }

    fn ctx_peak_backlog(ctx: &LeakCtx) -> usize {
        ctx.leaked.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(threads: usize, spt: usize) -> NoRecl {
        NoRecl::new(
            threads,
            PoolConfig { slots_per_thread: spt, retired_threshold: 1, steal_batch: 4 },
        )
        .unwrap()
    }

    #[test]
    fn retired_slots_never_return() {
        let s = scheme(1, 8);
        let mut ctx = s.register();
        let mut seen = Vec::new();
        for i in 0..8 {
            let n = s.alloc(&mut ctx, i).unwrap().unwrap();
            assert!(!seen.contains(&n.slot));
            seen.push(n.slot);
            s.retire(&mut ctx, n).unwrap();
        }
        assert!(matches!(s.alloc(&mut ctx, 99), Err(PoolExhausted)));
        assert_eq!(ctx.leaked_len(), 8);
        assert_eq!(ctx.retires(), 8);
    }

    #[test]
    fn abandoned_slots_do_return() {
        let s = scheme(1, 3);
        let mut ctx = s.register();
        for i in 0..100 {
            let n = s.alloc(&mut ctx, i).unwrap().unwrap();
            s.abandon(&mut ctx, n);
        }
        assert_eq!(ctx.leaked_len(), 0);
    }

    #[test]
    fn link_ops_ignore_versions() {
        let s = scheme(1, 8);
        let mut ctx = s.register();
        let a = s.alloc(&mut ctx, 1).unwrap().unwrap();
        let b = s.alloc(&mut ctx, 2).unwrap().unwrap();
        let c = s.alloc(&mut ctx, 3).unwrap().unwrap();
        assert!(s.update_link(a, None, Some(b)));
        assert_eq!(s.get_next(&mut ctx, a).unwrap(), Some(b));
        assert_eq!(s.get_key(&mut ctx, b).unwrap(), 2);
        assert!(s.update_link(a, Some(b), Some(c)));
        assert!(!s.update_link(a, Some(b), None));
        assert!(s.mark(a));
        assert!(s.is_marked(a));
        assert!(!s.update_link(a, Some(c), None));
    }
}
