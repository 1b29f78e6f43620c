//! The version-based reclamation scheme.
//!
//! Slots carry birth and retire epochs; links carry versions. Threads cache
//! the global epoch at checkpoints and compare against it on reads; writes
//! carry version expectations derived from birth epochs. Reusing a slot
//! forces the epoch past its retire stamp first, so every reference and
//! every pending compare-exchange from the slot's previous life is detected
//! (reads restart, writes fail) instead of corrupting the new tenant.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::cell::{Key, LinkState, NodeCell, NodeRef, SlotId};
use crate::epoch::{Epoch, GlobalEpoch};
use crate::hooks::{self, PausePoint};
use crate::invariants::InvariantRecorder;
use crate::pool::{Arena, ArenaError, PoolConfig, PoolCtx, PoolExhausted};
use crate::reclaim::{Outcome, Reclaimer, Restart};

#[derive(Default)]
pub(crate) struct CtxStats {
    pub(crate) restarts: u64,
    pub(crate) allocs: u64,
    pub(crate) retires: u64,
    pub(crate) peak_retired: usize,
}

/// Per-thread state: the cached epoch, the slot pools, and the bookkeeping
/// needed to leave nothing dangling when an operation restarts.
pub struct ThreadCtx {
    tid: usize,
    /// Epoch observed at the last checkpoint.
    my_e: Epoch,
    pool: PoolCtx,
    /// Nodes allocated by the running operation but not yet linked in.
    unpublished: Vec<NodeRef>,
    /// Nodes this thread marked and still owes a retirement.
    pending_retire: Vec<NodeRef>,
    stats: CtxStats,
}

impl ThreadCtx {
    pub fn tid(&self) -> usize {
        self.tid
    }

    pub fn my_epoch(&self) -> Epoch {
        self.my_e
    }

    pub fn restarts(&self) -> u64 {
        self.stats.restarts
    }

    pub fn allocs(&self) -> u64 {
        self.stats.allocs
    }

    pub fn retires(&self) -> u64 {
        self.stats.retires
    }

    pub fn alloc_len(&self) -> usize {
        self.pool.alloc_len()
    }

    pub(crate) fn pool(&self) -> &PoolCtx {
        &self.pool
    }

    pub fn retired_len(&self) -> usize {
        self.pool.retired_len()
    }
}

/// The scheme itself: one global epoch, one slot arena, shared by every
/// registered thread.
pub struct Vbr {
    epoch: GlobalEpoch,
    arena: Arena,
    recorder: Option<InvariantRecorder>,
    registered: AtomicUsize,
}

impl Vbr {
    pub fn new(threads: usize, config: PoolConfig) -> Result<Self, ArenaError> {
        Ok(Self {
            epoch: GlobalEpoch::new(),
            arena: Arena::new(threads, config)?,
            recorder: None,
            registered: AtomicUsize::new(0),
        })
    }

    /// Like [`Vbr::new`], with a lifetime recorder attached. Every alloc,
    /// retire and link write is then checked against the reuse rules.
    pub fn with_recorder(threads: usize, config: PoolConfig) -> Result<Self, ArenaError> {
        let mut scheme = Self::new(threads, config)?;
        scheme.recorder = Some(InvariantRecorder::new(scheme.arena.capacity()));
        Ok(scheme)
    }

    pub fn epoch(&self) -> &GlobalEpoch {
        &self.epoch
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn recorder(&self) -> Option<&InvariantRecorder> {
        self.recorder.as_ref()
    }

    #[inline]
    fn cell(&self, slot: SlotId) -> &NodeCell {
        self.arena.cell(slot)
    }

    /// Moves a batch of free slots from `ctx` to the shared pool, for
    /// harnesses that redistribute capacity across threads.
    pub fn donate_to_global(&self, ctx: &mut ThreadCtx, batch: usize) {
        self.arena.donate_to_global(&mut ctx.pool.alloc, batch);
    }

    /// Empties the local allocation list. Test scripts use this to force the
    /// next allocation onto a chosen slot.
    pub(crate) fn drain_local_free(&self, ctx: &mut ThreadCtx) -> Vec<SlotId> {
        let mut out = Vec::new();
        while let Some(s) = ctx.pool.alloc.pop(&self.arena) {
            out.push(s);
        }
        out
    }

    pub(crate) fn restore_local_free(&self, ctx: &mut ThreadCtx, slots: &[SlotId]) {
        for &s in slots.iter().rev() {
            ctx.pool.alloc.push(&self.arena, s);
        }
    }
}

fn target_of(n: Option<NodeRef>) -> (Option<SlotId>, Epoch) {
    match n {
        Some(r) => (Some(r.slot), r.birth),
        // NULL carries birth 0, below every real epoch.
        None => (None, 0),
    }
}

impl Reclaimer for Vbr {
    type Ctx = ThreadCtx;

    fn register(&self) -> ThreadCtx {
        let tid = self.registered.fetch_add(1, Ordering::SeqCst);
        assert!(tid < self.arena.threads(), "more registrations than configured threads");
        ThreadCtx {
            tid,
            my_e: self.epoch.read(),
            pool: self.arena.adopt_partition(tid),
            unpublished: Vec::new(),
            pending_retire: Vec::new(),
            stats: CtxStats::default(),
        }
    }

    fn checkpoint_install(&self, ctx: &mut ThreadCtx) {
        // Keeps the retiree backlog near the configured threshold instead of
        // letting it grow while fresh slots last. Recycled slots still pass
        // the epoch gate in `alloc` before they are handed out.
        self.arena.flush_retired(&mut ctx.pool);
        ctx.my_e = self.epoch.read();
    }

    fn rollback(&self, ctx: &mut ThreadCtx) {
        // Unlinked nodes go straight back to the allocation list; they were
        // never published, so no other thread holds a reference to this
        // lifetime of theirs.
        while let Some(n) = ctx.unpublished.pop() {
            if let Some(r) = &self.recorder {
                r.on_unpublish(n.slot);
            }
            ctx.pool.alloc.push(&self.arena, n.slot);
        }
        // Marked victims whose retirement this restart interrupted are
        // retired now; nobody else will, and their slots would leak.
        while let Some(n) = ctx.pending_retire.pop() {
            let cell = self.cell(n.slot);
            if cell.birth.load(Ordering::SeqCst) == n.birth
                && cell.retire.load(Ordering::SeqCst) == 0
            {
                let stamp = self.epoch.read();
                cell.retire.store(stamp, Ordering::SeqCst);
                if let Some(r) = &self.recorder {
                    r.on_retire(n.slot, n.birth, stamp, cell.link.load());
                }
                ctx.pool.retired.push(&self.arena, n.slot);
                ctx.stats.retires += 1;
                ctx.stats.peak_retired = ctx.stats.peak_retired.max(ctx.pool.retired_len());
            }
        }
        ctx.my_e = self.epoch.read();
        ctx.stats.restarts += 1;
    }

    fn end_op(&self, ctx: &mut ThreadCtx) {
        debug_assert!(ctx.unpublished.is_empty(), "operation finished with an unpublished node");
        debug_assert!(ctx.pending_retire.is_empty(), "operation finished owing a retirement");
    }

    fn alloc(&self, ctx: &mut ThreadCtx, key: Key) -> Result<Outcome<NodeRef>, PoolExhausted> {
        let slot = self.arena.take_slot(&mut ctx.pool)?;
        let cell = self.cell(slot);
        if cell.retire_epoch() >= ctx.my_e {
            // Threads that saw this slot live under the current epoch may
            // still present its old versions. Push the epoch forward once so
            // the next tenant's birth exceeds them all, and restart.
            self.epoch.try_advance(ctx.my_e);
            ctx.pool.alloc.push(&self.arena, slot);
            return Ok(Err(Restart));
        }
        cell.birth.store(ctx.my_e, Ordering::SeqCst);
        cell.retire.store(0, Ordering::SeqCst);
        // A stale compare-exchange aimed at the previous tenant could slip in
        // here, but it can only install a version below my_e, so re-reading
        // and retrying settles the link in a bounded number of attempts.
        loop {
            let cur = cell.link.load();
            if cell.link.compare_exchange(cur, LinkState::null(ctx.my_e)) {
                break;
            }
        }
        cell.key.store(key, Ordering::SeqCst);
        if let Some(r) = &self.recorder {
            r.on_alloc(slot, ctx.my_e);
        }
        let n = NodeRef { slot, birth: ctx.my_e };
        ctx.unpublished.push(n);
        ctx.stats.allocs += 1;
        Ok(Ok(n))
    }

    fn abandon(&self, ctx: &mut ThreadCtx, n: NodeRef) {
        ctx.unpublished.retain(|u| *u != n);
        if let Some(r) = &self.recorder {
            r.on_unpublish(n.slot);
        }
        ctx.pool.alloc.push(&self.arena, n.slot);
    }

    fn note_published(&self, ctx: &mut ThreadCtx, n: NodeRef) {
        ctx.unpublished.retain(|u| *u != n);
        if let Some(r) = &self.recorder {
            r.on_publish(n.slot, n.birth);
        }
    }

    /// Callers invoke this only once the node is confirmed physically
    /// unlinked; the rollback duty retires everything recorded here, and
    /// retiring a still-reachable node would let a traversal cross into a
    /// reused slot without any version to catch it.
    fn record_pending_retire(&self, ctx: &mut ThreadCtx, n: NodeRef) {
        if !ctx.pending_retire.contains(&n) {
            ctx.pending_retire.push(n);
        }
        if let Some(r) = &self.recorder {
            r.on_unlink(n.slot, n.birth);
        }
    }

    fn retire(&self, ctx: &mut ThreadCtx, n: NodeRef) -> Outcome<()> {
        // Whatever happens below, the retirement is no longer owed.
        ctx.pending_retire.retain(|p| *p != n);
        let cell = self.cell(n.slot);
        if cell.birth.load(Ordering::SeqCst) != n.birth || cell.retire.load(Ordering::SeqCst) != 0
        {
            return Ok(());
        }
        let stamp = self.epoch.read();
        cell.retire.store(stamp, Ordering::SeqCst);
        if let Some(r) = &self.recorder {
            r.on_retire(n.slot, n.birth, stamp, cell.link.load());
        }
        ctx.pool.retired.push(&self.arena, n.slot);
        ctx.stats.retires += 1;
        ctx.stats.peak_retired = ctx.stats.peak_retired.max(ctx.pool.retired_len());
        hooks::pause(PausePoint::AfterRetire);
        if stamp > ctx.my_e {
            return Err(Restart);
        }
        Ok(())
    }

    fn get_next(&self, ctx: &mut ThreadCtx, n: NodeRef) -> Outcome<Option<NodeRef>> {
        let link = self.cell(n.slot).link.load();
        let succ = link.target.map(|s| NodeRef {
            slot: s,
            birth: self.cell(s).birth.load(Ordering::SeqCst),
        });
        hooks::pause(PausePoint::AfterReadLink);
        // An unchanged epoch rules out any reuse of n or its successor since
        // the checkpoint, so both reads above are consistent.
        if ctx.my_e != self.epoch.read() {
            return Err(Restart);
        }
        Ok(succ)
    }

    fn get_key(&self, ctx: &mut ThreadCtx, n: NodeRef) -> Outcome<Key> {
        let key = self.cell(n.slot).key.load(Ordering::SeqCst);
        if ctx.my_e != self.epoch.read() {
            return Err(Restart);
        }
        Ok(key)
    }

    fn is_marked(&self, n: NodeRef) -> bool {
        let res = self.cell(n.slot).link.load().marked;
        // A reused slot counts as removed, whatever its current mark bit.
        if self.cell(n.slot).birth.load(Ordering::SeqCst) != n.birth {
            return true;
        }
        res
    }

    fn update_link(&self, n: NodeRef, expected: Option<NodeRef>, new: Option<NodeRef>) -> bool {
        let (exp_t, exp_b) = target_of(expected);
        let (new_t, new_b) = target_of(new);
        let exp_v = n.birth.max(exp_b);
        let new_v = n.birth.max(new_b);
        let cur = LinkState { target: exp_t, marked: false, version: exp_v };
        let next = LinkState { target: new_t, marked: false, version: new_v };
        hooks::pause(PausePoint::BeforeCas);
        let ok = self.cell(n.slot).link.compare_exchange(cur, next);
        if ok {
            if let Some(r) = &self.recorder {
                r.on_link_write(n.slot, new_v, n.birth, new_b);
            }
        }
        ok
    }

    fn mark(&self, n: NodeRef) -> bool {
        let cell = self.cell(n.slot);
        // The successor is re-read here: marking freezes whatever the link
        // holds at this instant, so callers must unlink using a successor
        // read after the mark, never one from before.
        let link = cell.link.load();
        let exp_b = match link.target {
            Some(s) => self.cell(s).birth.load(Ordering::SeqCst),
            None => 0,
        };
        let exp_v = n.birth.max(exp_b);
        if cell.birth.load(Ordering::SeqCst) != n.birth {
            return false;
        }
        let cur = LinkState { target: link.target, marked: false, version: exp_v };
        let next = LinkState { target: link.target, marked: true, version: exp_v };
        hooks::pause(PausePoint::BeforeCas);
        let ok = cell.link.compare_exchange(cur, next);
        if ok {
            if let Some(r) = &self.recorder {
                r.on_link_write(n.slot, exp_v, n.birth, exp_b);
                r.on_mark(n.slot, n.birth);
            }
        }
        ok
    }

    fn epoch_advances(&self) -> u64 {
        self.epoch.advances()
    }

    fn ctx_restarts(ctx: &ThreadCtx) -> u64 {
        ctx.stats.restarts
    }

    fn ctx_peak_backlog(ctx: &ThreadCtx) -> usize {
        ctx.stats.peak_retired
    }
}

#[cfg(feature = "mutation")]
impl Vbr {
    /// Deliberately broken link write for fault-injection tests: compares
    /// only the pointer half (by adopting whatever version is currently
    /// stored) instead of deriving the version from birth epochs. This is
    /// the classic compare-exchange that a recycled slot can fool.
    pub fn unversioned_update_link(
        &self,
        n: NodeRef,
        expected: Option<NodeRef>,
        new: Option<NodeRef>,
    ) -> bool {
        let cell = self.cell(n.slot);
        let cur = cell.link.load();
        if cur.marked || cur.target != expected.map(|r| r.slot) {
            return false;
        }
        let next = LinkState {
            target: new.map(|r| r.slot),
            marked: false,
            version: cur.version,
        };
        cell.link.compare_exchange(cur, next)
    }
}
