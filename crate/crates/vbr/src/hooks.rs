//! Named pause points for scripted interleavings.
//!
//! Debug builds expose three yield points inside the reclamation primitives.
//! A test installs a handler; threads tag themselves; the handler decides,
//! per (tag, point), whether to park the thread until the script releases
//! it. Release builds compile the hooks down to nothing.

/// The three pause sites inside the mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PausePoint {
    /// In `get_next`, after the link and birth reads, before the epoch check.
    AfterReadLink,
    /// In `update_link` and `mark`, immediately before the compare-exchange.
    BeforeCas,
    /// In `retire`, after the stamp and queue append, before the staleness
    /// check.
    AfterRetire,
}

#[cfg(debug_assertions)]
mod imp {
    use super::PausePoint;
    use std::cell::Cell;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

    static ACTIVE: AtomicBool = AtomicBool::new(false);

    type Handler = Arc<dyn Fn(PausePoint, u64) + Send + Sync>;

    fn handler_slot() -> &'static Mutex<Option<Handler>> {
        static SLOT: OnceLock<Mutex<Option<Handler>>> = OnceLock::new();
        SLOT.get_or_init(|| Mutex::new(None))
    }

    // Serializes whole tests that install handlers, so unrelated tests never
    // observe each other's scripts.
    fn registration_lock() -> &'static Mutex<()> {
        static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
        LOCK.get_or_init(|| Mutex::new(()))
    }

    thread_local! {
        static TAG: Cell<u64> = const { Cell::new(0) };
    }

    /// Marks the calling thread for handler dispatch. Tag 0 means untagged;
    /// untagged threads never pause.
    pub fn set_thread_tag(tag: u64) {
        TAG.with(|t| t.set(tag));
    }

    pub fn thread_tag() -> u64 {
        TAG.with(|t| t.get())
    }

    /// Keeps the installed handler alive; uninstalls on drop.
    pub struct HookGuard {
        _reg: MutexGuard<'static, ()>,
    }

    impl Drop for HookGuard {
        fn drop(&mut self) {
            ACTIVE.store(false, Ordering::SeqCst);
            *lock_no_poison(handler_slot()) = None;
        }
    }

    fn lock_no_poison<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
        m.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Installs `f` as the pause handler for the duration of the returned
    /// guard. Installation is exclusive across threads.
    pub fn install<F>(f: F) -> HookGuard
    where
        F: Fn(PausePoint, u64) + Send + Sync + 'static,
    {
        let reg = lock_no_poison(registration_lock());
        *lock_no_poison(handler_slot()) = Some(Arc::new(f));
        ACTIVE.store(true, Ordering::SeqCst);
        HookGuard { _reg: reg }
    }

    pub const fn compiled_in() -> bool {
        true
    }

    #[inline]
    pub fn pause(point: PausePoint) {
        if !ACTIVE.load(Ordering::Relaxed) {
            return;
        }
        let tag = thread_tag();
        if tag == 0 {
            return;
        }
        let handler = lock_no_poison(handler_slot()).clone();
        if let Some(h) = handler {
            h(point, tag);
        }
    }
}

#[cfg(not(debug_assertions))]
mod imp {
    use super::PausePoint;

    pub fn set_thread_tag(_tag: u64) {}

    pub fn thread_tag() -> u64 {
        0
    }

    pub struct HookGuard;

    pub fn install<F>(_f: F) -> HookGuard
    where
        F: Fn(PausePoint, u64) + Send + Sync + 'static,
    {
        HookGuard
    }

    pub const fn compiled_in() -> bool {
        false
    }

    #[inline(always)]
    pub fn pause(_point: PausePoint) {}
}

pub use imp::{compiled_in, install, pause, set_thread_tag, thread_tag, HookGuard};

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn untagged_threads_never_dispatch() {
        let hits = Arc::new(AtomicUsize::new(0));
        let h = Arc::clone(&hits);
        let _guard = install(move |_, _| {
            h.fetch_add(1, Ordering::SeqCst);
        });
        pause(PausePoint::BeforeCas);
        assert_eq!(hits.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn tagged_thread_dispatches_with_point_and_tag() {
        let seen = Arc::new(AtomicUsize::new(0));
        let s = Arc::clone(&seen);
        let _guard = install(move |p, tag| {
            if p == PausePoint::AfterRetire && tag == 9 {
                s.fetch_add(1, Ordering::SeqCst);
            }
        });
        set_thread_tag(9);
        pause(PausePoint::AfterRetire);
        pause(PausePoint::AfterReadLink);
        set_thread_tag(0);
        assert_eq!(seen.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn uninstall_on_drop() {
        let hits = Arc::new(AtomicUsize::new(0));
        {
            let h = Arc::clone(&hits);
            let _guard = install(move |_, _| {
                h.fetch_add(1, Ordering::SeqCst);
            });
            set_thread_tag(1);
            pause(PausePoint::BeforeCas);
            set_thread_tag(0);
        }
        set_thread_tag(1);
        pause(PausePoint::BeforeCas);
        set_thread_tag(0);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
