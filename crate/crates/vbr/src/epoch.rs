//! Shared global epoch counter.

use crossbeam_utils::CachePadded;
use std::sync::atomic::{AtomicU64, Ordering};

/// Epochs are plain counters. Real epochs start at 1; the value 0 is reserved
/// to encode "never retired" and "NULL target" in node metadata.
pub type Epoch = u64;

/// Monotone counter shared by all threads of a registry. It only moves
/// forward, one step at a time, and only by compare-and-swap.
pub struct GlobalEpoch {
    value: CachePadded<AtomicU64>,
    advances: CachePadded<AtomicU64>,
}

impl GlobalEpoch {
    pub fn new() -> Self {
        Self {
            value: CachePadded::new(AtomicU64::new(1)),
            advances: CachePadded::new(AtomicU64::new(0)),
        }
    }

    /// Current epoch, sequentially consistent.
    #[inline]
    pub fn read(&self) -> Epoch {
        self.value.load(Ordering::SeqCst)
    }

    /// One compare-and-swap attempt of `expected -> expected + 1`. A failed
    /// attempt means another thread already advanced, which serves the same
    /// purpose, so the call never retries.
    pub fn try_advance(&self, expected: Epoch) -> bool {
        let ok = self
            .value
            .compare_exchange(expected, expected + 1, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok();
        if ok {
            self.advances.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    /// Number of successful advances since construction.
    pub fn advances(&self) -> u64 {
        self.advances.load(Ordering::Relaxed)
    }
}

impl Default for GlobalEpoch {
    fn default() -> Self {
        Self::new()
    }
}
