//! Epoch-based reclamation.
//!
//! Threads announce the epoch they operate under; a retired slot is reused
//! only after every announced epoch has moved past its retire stamp. Reads
//! therefore never touch reclaimed memory and nothing ever restarts, but a
//! single stalled announcement blocks reclamation globally.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crossbeam_utils::CachePadded;

use crate::cell::{Key, LinkState, NodeRef, SlotId};
use crate::epoch::{Epoch, GlobalEpoch};
use crate::pool::{Arena, ArenaError, PoolConfig, PoolCtx, PoolExhausted};
use crate::reclaim::{Outcome, Reclaimer};

const INACTIVE: u64 = u64::MAX;

/// Epoch advance is attempted once per this many finished operations.
const ADVANCE_CADENCE: u64 = 128;

pub struct EbrCtx {
    tid: usize,
    pool: PoolCtx,
    /// Retired slots with their retire stamps, oldest first.
    limbo: VecDeque<(SlotId, Epoch)>,
    pinned: bool,
    ops: u64,
    retires: u64,
    peak_limbo: usize,
}

impl EbrCtx {
    pub fn tid(&self) -> usize {
        self.tid
    }

    pub fn limbo_len(&self) -> usize {
        self.limbo.len()
    }

    pub fn peak_limbo(&self) -> usize {
        self.peak_limbo
    }

    pub fn retires(&self) -> u64 {
        self.retires
    }
}

pub struct Ebr {
    epoch: GlobalEpoch,
    arena: Arena,
    announcements: Box<[CachePadded<AtomicU64>]>,
    registered: AtomicUsize,
}

impl Ebr {
    pub fn new(threads: usize, config: PoolConfig) -> Result<Self, ArenaError> {
        Ok(Self {
            epoch: GlobalEpoch::new(),
            arena: Arena::new(threads, config)?,
            announcements: (0..threads)
                .map(|_| CachePadded::new(AtomicU64::new(INACTIVE)))
                .collect(),
            registered: AtomicUsize::new(0),
        })
    }

    pub fn epoch(&self) -> &GlobalEpoch {
        &self.epoch
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    /// Oldest epoch any thread is currently announced under.
    fn min_active(&self) -> Option<Epoch> {
        self.announcements
            .iter()
            .map(|a| a.load(Ordering::SeqCst))
            .filter(|&a| a != INACTIVE)
            .min()
    }

    /// Advances the global epoch iff every active thread has announced the
    /// current value.
    fn try_advance(&self) {
        let e = self.epoch.read();
        let all_current = self
            .announcements
            .iter()
            .map(|a| a.load(Ordering::SeqCst))
            .all(|a| a == INACTIVE || a == e);
        if all_current {
            self.epoch.try_advance(e);
        }
    }

    /// Moves every limbo entry whose grace period has passed back to the
    /// allocation list.
    fn reclaim(&self, ctx: &mut EbrCtx) {
        let min = self.min_active();
        while let Some(&(slot, stamp)) = ctx.limbo.front() {
            let safe = match min {
                Some(m) => m > stamp,
                None => true,
            };
            if !safe {
                break;
            }
            debug_assert!(
                self.announcements
                    .iter()
                    .map(|a| a.load(Ordering::SeqCst))
                    .all(|a| a == INACTIVE || a > stamp),
                "slot reused before its grace period elapsed"
            );
            ctx.limbo.pop_front();
            ctx.pool.alloc.push(&self.arena, slot);
        }
    }
}

impl Reclaimer for Ebr {
    type Ctx = EbrCtx;

    fn register(&self) -> EbrCtx {
        let tid = self.registered.fetch_add(1, Ordering::SeqCst);
        assert!(tid < self.arena.threads(), "more registrations than configured threads");
        EbrCtx {
            tid,
            pool: self.arena.adopt_partition(tid),
            limbo: VecDeque::new(),
            pinned: false,
            ops: 0,
            retires: 0,
            peak_limbo: 0,
        }
    }

    /// The first checkpoint of an operation pins the thread: its current
    /// epoch is published until `end_op`. Later checkpoints in the same
    /// operation keep the original announcement, as re-announcing mid-
    /// operation would break the grace-period reasoning.
    fn checkpoint_install(&self, ctx: &mut EbrCtx) {
        if !ctx.pinned {
            self.announcements[ctx.tid].store(self.epoch.read(), Ordering::SeqCst);
            ctx.pinned = true;
        }
    }

    // Never reached: no operation under this scheme restarts.
    fn rollback(&self, _ctx: &mut EbrCtx) {}

    fn end_op(&self, ctx: &mut EbrCtx) {
        self.announcements[ctx.tid].store(INACTIVE, Ordering::SeqCst);
        ctx.pinned = false;
        ctx.ops += 1;
        if ctx.ops % ADVANCE_CADENCE == 0 {
            self.try_advance();
            self.reclaim(ctx);
        }
    }

    fn alloc(&self, ctx: &mut EbrCtx, key: Key) -> Result<Outcome<NodeRef>, PoolExhausted> {
        if ctx.pool.alloc.is_empty() {
            self.try_advance();
            self.reclaim(ctx);
        }
        let slot = self.arena.take_slot(&mut ctx.pool)?;
        let cell = self.arena.cell(slot);
        // Grace has elapsed, so no thread can race this initialization.
        cell.link.store(LinkState::null(0));
        cell.key.store(key, Ordering::SeqCst);
        Ok(Ok(NodeRef { slot, birth: 0 }))
    }

    fn abandon(&self, ctx: &mut EbrCtx, n: NodeRef) {
        ctx.pool.alloc.push(&self.arena, n.slot);
    }

    fn note_published(&self, _ctx: &mut EbrCtx, _n: NodeRef) {}

    // Nothing restarts, so retirement is never left pending.
    fn record_pending_retire(&self, _ctx: &mut EbrCtx, _n: NodeRef) {}

    fn retire(&self, ctx: &mut EbrCtx, n: NodeRef) -> Outcome<()> {
        ctx.limbo.push_back((n.slot, self.epoch.read()));
        ctx.retires += 1;
        ctx.peak_limbo = ctx.peak_limbo.max(ctx.limbo.len());
        Ok(())
    }

    fn get_next(&self, _ctx: &mut EbrCtx, n: NodeRef) -> Outcome<Option<NodeRef>> {
        let link = self.arena.cell(n.slot).link.load();
        Ok(link.target.map(|s| NodeRef { slot: s, birth: 0 }))
    }

    fn get_key(&self, _ctx: &mut EbrCtx, n: NodeRef) -> Outcome<Key> {
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

    fn epoch_advances(&self) -> u64 {
        self.epoch.advances()
    }

    fn ctx_peak_backlog(ctx: &EbrCtx) -> usize {
        ctx.peak_limbo
    }
}
