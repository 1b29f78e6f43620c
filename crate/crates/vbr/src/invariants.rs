//! Debug-mode recorder for per-slot lifetime history and write-site checks.
//!
//! The recorder never panics; it counts violations and keeps a bounded log so
//! tests can assert on exact counts (including the deliberate-fault builds,
//! which must produce nonzero counts).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::cell::{LinkState, SlotId};
use crate::epoch::Epoch;

const LOG_CAP: usize = 64;

const PUBLISHED: u64 = 1;
const MARKED: u64 = 1 << 1;
const UNLINKED: u64 = 1 << 2;
const STAGE_SHIFT: u32 = 3;
const STAGE_MASK: u64 = (1 << STAGE_SHIFT) - 1;

struct SlotHistory {
    birth: AtomicU64,
    retire: AtomicU64,
    /// Life-cycle flags packed with the birth they were recorded against,
    /// `birth << 3 | flags`. Stage reports trail the compare-exchanges they
    /// describe, so a reporter can be descheduled long enough for the slot
    /// to be recycled underneath it; carrying the birth lets such a report
    /// identify itself as stale and be dropped instead of being charged to
    /// the next lifetime.
    stages: AtomicU64,
}

/// Tracks the last recorded lifetime of every slot and checks each
/// transition against the reuse and life-cycle rules:
///
/// - a reused slot's new birth must exceed the previous retire epoch;
/// - a retire stamp must be at least the birth it closes;
/// - a marked link frozen at retirement must carry a version within
///   `[birth, retire]`;
/// - a published node is retired only after being marked and unlinked;
/// - every successful link write must store version `max(owner birth,
///   target birth)` (NULL target counts as birth 0).
///
/// Birth and retire reports are ordered by the slot's pool hand-off chain;
/// every other report carries the lifetime it belongs to and is dropped if
/// that lifetime has already closed. A correct build can therefore never
/// trip a rule by timing alone.
pub struct InvariantRecorder {
    slots: Box<[SlotHistory]>,
    reuses: AtomicU64,
    violations: AtomicU64,
    write_site_violations: AtomicU64,
    log: Mutex<Vec<String>>,
}

impl InvariantRecorder {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: (0..capacity)
                .map(|_| SlotHistory {
                    birth: AtomicU64::new(0),
                    retire: AtomicU64::new(0),
                    stages: AtomicU64::new(0),
                })
                .collect(),
            reuses: AtomicU64::new(0),
            violations: AtomicU64::new(0),
            write_site_violations: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Total slot reuses observed (allocations of a previously retired slot).
    pub fn reuses(&self) -> u64 {
        self.reuses.load(Ordering::SeqCst)
    }

    /// Lifetime-rule violations observed. Zero in a correct build.
    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::SeqCst)
    }

    /// Write-site version-rule violations observed. Zero in a correct build.
    pub fn write_site_violations(&self) -> u64 {
        self.write_site_violations.load(Ordering::SeqCst)
    }

    /// Snapshot of the violation log (bounded; earliest entries kept).
    pub fn log(&self) -> Vec<String> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn record(&self, counter: &AtomicU64, line: String) {
        counter.fetch_add(1, Ordering::SeqCst);
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        if log.len() < LOG_CAP {
            eprintln!("{line}");
            log.push(line);
        }
    }

    /// Called by a successful allocation, before the slot is handed out.
    pub(crate) fn on_alloc(&self, slot: SlotId, birth: Epoch) {
        let h = &self.slots[slot as usize];
        let prev_birth = h.birth.load(Ordering::SeqCst);
        let prev_retire = h.retire.load(Ordering::SeqCst);
        if prev_retire != 0 {
            self.reuses.fetch_add(1, Ordering::SeqCst);
            if birth <= prev_retire {
                self.record(
                    &self.violations,
                    format!(
                        "slot={slot} kind=reuse-before-advance lifetime=({prev_birth},{prev_retire})→({birth},⊥)"
                    ),
                );
            }
        } else if prev_birth != 0 {
            self.record(
                &self.violations,
                format!(
                    "slot={slot} kind=double-alloc lifetime=({prev_birth},⊥)→({birth},⊥)"
                ),
            );
        }
        h.birth.store(birth, Ordering::SeqCst);
        h.retire.store(0, Ordering::SeqCst);
        h.stages.store(birth << STAGE_SHIFT, Ordering::SeqCst);
    }

    /// Called when an allocated node is returned to the free pool without
    /// ever having been published. The aborted lifetime leaves no trace, so
    /// the slot may be handed out again without an epoch gap.
    pub(crate) fn on_unpublish(&self, slot: SlotId) {
        let h = &self.slots[slot as usize];
        h.birth.store(0, Ordering::SeqCst);
        h.retire.store(0, Ordering::SeqCst);
        h.stages.store(0, Ordering::SeqCst);
    }

    /// Sets a stage flag for the given lifetime. `None` means the lifetime
    /// is no longer current and nothing was touched; `Some(false)` means the
    /// flag had already been set for it.
    fn set_stage(&self, slot: SlotId, birth: Epoch, flag: u64) -> Option<bool> {
        let h = &self.slots[slot as usize];
        let mut cur = h.stages.load(Ordering::SeqCst);
        loop {
            if cur >> STAGE_SHIFT != birth {
                return None;
            }
            if cur & flag != 0 {
                return Some(false);
            }
            match h.stages.compare_exchange(
                cur,
                cur | flag,
                Ordering::SeqCst,
                Ordering::SeqCst,
            ) {
                Ok(_) => return Some(true),
                Err(now) => cur = now,
            }
        }
    }

    /// Called by the thread that linked the node into a structure.
    pub(crate) fn on_publish(&self, slot: SlotId, birth: Epoch) {
        if self.set_stage(slot, birth, PUBLISHED) == Some(false) {
            self.record(
                &self.violations,
                format!("slot={slot} kind=double-publish lifetime=({birth},⊥)→"),
            );
        }
    }

    /// Called by the thread whose mark attempt succeeded.
    pub(crate) fn on_mark(&self, slot: SlotId, birth: Epoch) {
        if self.set_stage(slot, birth, MARKED) == Some(false) {
            self.record(
                &self.violations,
                format!("slot={slot} kind=double-mark lifetime=({birth},⊥)→"),
            );
        }
    }

    /// Called when the node's remover learns the node is physically
    /// unlinked. May repeat; the retire check only needs it once.
    pub(crate) fn on_unlink(&self, slot: SlotId, birth: Epoch) {
        self.set_stage(slot, birth, UNLINKED);
    }

    /// Called by the retire path right after stamping, with the link state
    /// observed at that moment.
    pub(crate) fn on_retire(&self, slot: SlotId, birth: Epoch, stamp: Epoch, link: LinkState) {
        let h = &self.slots[slot as usize];
        let rec_birth = h.birth.load(Ordering::SeqCst);
        if rec_birth != birth {
            self.record(
                &self.violations,
                format!(
                    "slot={slot} kind=retire-foreign-lifetime lifetime=({rec_birth},?)→({birth},{stamp})"
                ),
            );
        }
        if stamp < birth {
            self.record(
                &self.violations,
                format!("slot={slot} kind=retire-before-birth lifetime=({birth},{stamp})→"),
            );
        }
        if link.marked && !(link.version >= birth && link.version <= stamp) {
            self.record(
                &self.violations,
                format!(
                    "slot={slot} kind=frozen-version-out-of-range lifetime=({birth},{stamp})→ version={}",
                    link.version
                ),
            );
        }
        let staged = h.stages.load(Ordering::SeqCst);
        let stages = if staged >> STAGE_SHIFT == birth { staged & STAGE_MASK } else { 0 };
        if stages & PUBLISHED != 0 {
            // A node that was reachable must go through invalidation and
            // physical unlinking before its slot is given up.
            if stages & MARKED == 0 {
                self.record(
                    &self.violations,
                    format!("slot={slot} kind=retire-unmarked lifetime=({birth},{stamp})→"),
                );
            }
            if stages & UNLINKED == 0 {
                self.record(
                    &self.violations,
                    format!("slot={slot} kind=retire-still-linked lifetime=({birth},{stamp})→"),
                );
            }
        }
        h.retire.store(stamp, Ordering::SeqCst);
    }

    /// Called after every successful link compare-exchange with the version
    /// it stored and the birth epochs it was derived from.
    pub(crate) fn on_link_write(&self, slot: SlotId, stored: Epoch, owner_birth: Epoch, target_birth: Epoch) {
        let expect = owner_birth.max(target_birth);
        if stored != expect {
            self.record(
                &self.write_site_violations,
                format!(
                    "slot={slot} kind=write-version-not-max lifetime=({owner_birth},{target_birth})→ stored={stored}"
                ),
            );
        }
    }
}
