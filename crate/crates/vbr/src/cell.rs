//! Node cells: reusable slots carrying epoch metadata and one versioned link.

use portable_atomic::AtomicU128;
use std::sync::atomic::{AtomicI64, AtomicU32, AtomicU64, Ordering};

use crate::epoch::Epoch;

/// Index of a cell inside an [`Arena`](crate::pool::Arena).
pub type SlotId = u32;

/// Set elements are fixed-width integers. The extreme values are reserved for
/// list sentinels and excluded from user key ranges.
pub type Key = i64;

/// A node reference: the slot plus the birth epoch observed when the
/// reference was obtained. The birth epoch is what tells one tenant of a slot
/// apart from a later one, so it travels with every reference.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeRef {
    pub slot: SlotId,
    pub birth: Epoch,
}

/// Decoded state of a link: target (or none), mark bit, version epoch.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LinkState {
    pub target: Option<SlotId>,
    pub marked: bool,
    pub version: Epoch,
}

impl LinkState {
    pub const fn null(version: Epoch) -> Self {
        Self { target: None, marked: false, version }
    }
}

const MARK_BIT: u64 = 1;

fn pack(s: LinkState) -> u128 {
    let target = match s.target {
        // Slot ids are shifted past the mark bit; raw value 0 is the NULL target.
        Some(slot) => (slot as u64 + 1) << 1,
        None => 0,
    };
    let word_a = target | if s.marked { MARK_BIT } else { 0 };
    ((s.version as u128) << 64) | word_a as u128
}

fn unpack(w: u128) -> LinkState {
    let word_a = w as u64;
    let raw = word_a >> 1;
    LinkState {
        target: if raw == 0 { None } else { Some((raw - 1) as SlotId) },
        marked: word_a & MARK_BIT != 0,
        version: (w >> 64) as Epoch,
    }
}

/// One link field. Word A packs the target slot and the mark bit (low bit);
/// word B is the version. Both words live in a single 128-bit atomic so they
/// always change together.
pub struct VersionedLink {
    word: AtomicU128,
}

impl VersionedLink {
    pub fn new() -> Self {
        Self { word: AtomicU128::new(pack(LinkState::null(0))) }
    }

    #[inline]
    pub fn load(&self) -> LinkState {
        unpack(self.word.load(Ordering::SeqCst))
    }

    /// One double-width compare-exchange attempt; never retried internally.
    #[inline]
    pub fn compare_exchange(&self, current: LinkState, new: LinkState) -> bool {
        self.word
            .compare_exchange(pack(current), pack(new), Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    /// Plain store, for schemes whose reuse rule guarantees exclusive access
    /// to the slot being initialized.
    #[inline]
    pub(crate) fn store(&self, s: LinkState) {
        self.word.store(pack(s), Ordering::SeqCst);
    }
}

impl Default for VersionedLink {
    fn default() -> Self {
        Self::new()
    }
}

/// One arena slot, padded to a cache line.
///
/// Every field is an atomic: stale threads are allowed to read (and attempt
/// compare-exchanges on) a slot after it was reclaimed, so all accesses must
/// stay well-defined under races. The versioning protocol, not the type
/// system, is what makes those stale accesses harmless.
#[repr(align(64))]
pub struct NodeCell {
    pub(crate) link: VersionedLink,
    pub(crate) birth: AtomicU64,
    /// 0 encodes "not retired"; real epochs start at 1.
    pub(crate) retire: AtomicU64,
    pub(crate) key: AtomicI64,
    /// Spare word threading this slot into pool lists; unused while the slot
    /// holds a live node.
    pub(crate) pool_next: AtomicU32,
    /// When this slot heads a batch in the shared pool: the batch's last slot.
    pub(crate) batch_tail: AtomicU32,
}

impl NodeCell {
    pub(crate) fn new() -> Self {
        Self {
            link: VersionedLink::new(),
            birth: AtomicU64::new(0),
            retire: AtomicU64::new(0),
            key: AtomicI64::new(0),
            pool_next: AtomicU32::new(crate::pool::NIL),
            batch_tail: AtomicU32::new(crate::pool::NIL),
        }
    }

    #[inline]
    pub fn birth(&self) -> Epoch {
        self.birth.load(Ordering::SeqCst)
    }

    #[inline]
    pub fn retire_epoch(&self) -> Epoch {
        self.retire.load(Ordering::SeqCst)
    }

    #[inline]
    pub fn link(&self) -> &VersionedLink {
        &self.link
    }

    #[inline]
    pub fn key(&self) -> Key {
        self.key.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cell_is_one_cache_line() {
        assert_eq!(std::mem::align_of::<NodeCell>(), 64);
        assert_eq!(std::mem::size_of::<NodeCell>(), 64);
    }

    #[test]
    fn null_unmarked_zero_is_all_zero_bits() {
        assert_eq!(pack(LinkState::null(0)), 0);
    }

    #[test]
    fn mark_bit_is_low_bit() {
        let s = LinkState { target: Some(7), marked: false, version: 3 };
        let m = LinkState { target: Some(7), marked: true, version: 3 };
        assert_eq!(pack(s) | 1, pack(m));
    }

    #[test]
    fn compare_exchange_requires_both_words() {
        let link = VersionedLink::new();
        let init = LinkState::null(0);
        let a = LinkState { target: Some(4), marked: false, version: 9 };
        assert!(link.compare_exchange(init, a));
        // Same target, wrong version: must fail.
        let stale = LinkState { target: Some(4), marked: false, version: 8 };
        let b = LinkState { target: Some(5), marked: false, version: 10 };
        assert!(!link.compare_exchange(stale, b));
        // Right version, wrong mark: must fail.
        let marked = LinkState { target: Some(4), marked: true, version: 9 };
        assert!(!link.compare_exchange(marked, b));
        assert!(link.compare_exchange(a, b));
        assert_eq!(link.load(), b);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(
            slot in proptest::option::of(0u32..u32::MAX),
            marked in any::<bool>(),
            version in any::<u64>(),
        ) {
            let s = LinkState { target: slot, marked, version };
            prop_assert_eq!(unpack(pack(s)), s);
        }

        #[test]
        fn distinct_states_pack_distinct(
            a_slot in proptest::option::of(0u32..1024),
            a_marked in any::<bool>(),
            a_version in 0u64..1024,
            b_slot in proptest::option::of(0u32..1024),
            b_marked in any::<bool>(),
            b_version in 0u64..1024,
        ) {
            let a = LinkState { target: a_slot, marked: a_marked, version: a_version };
            let b = LinkState { target: b_slot, marked: b_marked, version: b_version };
            prop_assert_eq!(pack(a) == pack(b), a == b);
        }
    }
}
