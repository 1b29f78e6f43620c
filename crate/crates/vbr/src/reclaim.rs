//! The scheme-independent reclamation interface.
//!
//! Set structures are written once against [`Reclaimer`]; the versioned
//! scheme, epoch-based reclamation, and the never-reclaim baseline all
//! implement it. For the latter two, the restart path simply never fires.

use crate::cell::{Key, NodeRef};
use crate::pool::PoolExhausted;

/// Signal that the running operation must unwind to its most recent
/// checkpoint: the holder's cached epoch fell behind the global epoch, so
/// references obtained since the checkpoint are no longer trustworthy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Restart;

/// Result of an epoch-checked operation: a value, or an unwind request.
pub type Outcome<T> = Result<T, Restart>;

/// Reclamation scheme selector used by benchmarks and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Vbr,
    Ebr,
    None,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Vbr, SchemeKind::Ebr, SchemeKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Vbr => "vbr",
            SchemeKind::Ebr => "ebr",
            SchemeKind::None => "none",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vbr" => Ok(SchemeKind::Vbr),
            "ebr" => Ok(SchemeKind::Ebr),
            "none" => Ok(SchemeKind::None),
            other => Err(format!("unknown scheme `{other}` (expected vbr, ebr, or none)")),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A memory reclamation scheme driving node allocation, access, and
/// retirement for the set structures.
///
/// Contract highlights, shared by all implementations:
///
/// - Each context belongs to one thread at a time; it may move between
///   threads only while no operation is in flight.
/// - `checkpoint_install` is called at every structure operation entry and
///   again right after each update whose success must not be rolled back
///   (a successful publish or a successful mark); `end_op` closes the
///   operation.
/// - Any `Restart` must be answered by `rollback` before retrying from the
///   checkpoint. Schemes that never restart still get well-formed call
///   sequences.
/// - `get_key` must be consumed before the next checkpoint installation;
///   references returned by `get_next` are valid until the holder's cached
///   epoch moves, and afterwards only for the version-guarded write
///   operations (`update_link`, `mark`) and `retire`.
pub trait Reclaimer: Send + Sync + Sized + 'static {
    type Ctx: Send;

    /// Creates the context for the next registered thread. Panics when more
    /// contexts are requested than the scheme was constructed for.
    fn register(&self) -> Self::Ctx;

    /// Refreshes the context's view of the epoch and marks the current
    /// program point as the place a later rollback resumes from. The caller's
    /// retry-loop head is that resume point.
    fn checkpoint_install(&self, ctx: &mut Self::Ctx);

    /// Answers a `Restart`: settles bookkeeping duties (unpublished slots
    /// return to the allocation list, pending retirees get stamped and
    /// queued), then refreshes the cached epoch.
    fn rollback(&self, ctx: &mut Self::Ctx);

    /// Closes a structure operation that completed without restart.
    fn end_op(&self, ctx: &mut Self::Ctx);

    /// Takes a slot and initializes it as a fresh node with the given key,
    /// recording it as unpublished. `Ok(Err(Restart))` means the candidate
    /// slot was retired too recently for the caller's cached epoch; the epoch
    /// was nudged forward and the caller must roll back and retry.
    fn alloc(&self, ctx: &mut Self::Ctx, key: Key) -> Result<Outcome<NodeRef>, PoolExhausted>;

    /// Returns a never-published slot to the allocation list (used when the
    /// publishing compare-exchange loses its race).
    fn abandon(&self, ctx: &mut Self::Ctx, n: NodeRef);

    /// Removes a node from the unpublished set after its publish succeeded.
    fn note_published(&self, ctx: &mut Self::Ctx, n: NodeRef);

    /// Records a node this context is now obliged to retire even if the
    /// operation unwinds before reaching its retire call. Callers must know
    /// the node to be physically unlinked already: everything recorded here
    /// may be retired by a rollback, and only unreachable nodes are safe to
    /// retire.
    fn record_pending_retire(&self, ctx: &mut Self::Ctx, n: NodeRef);

    /// Stamps the node's retire epoch and queues its slot for recycling.
    /// No-op when the node was already superseded or already retired. The
    /// node must be physically unlinked (see
    /// [`record_pending_retire`](Self::record_pending_retire)).
    fn retire(&self, ctx: &mut Self::Ctx, n: NodeRef) -> Outcome<()>;

    /// Reads `n`'s successor (mark bit stripped) together with the
    /// successor's birth epoch.
    fn get_next(&self, ctx: &mut Self::Ctx, n: NodeRef) -> Outcome<Option<NodeRef>>;

    /// Reads `n`'s key.
    fn get_key(&self, ctx: &mut Self::Ctx, n: NodeRef) -> Outcome<Key>;

    /// Whether `n` is marked. Total: never restarts; a superseded slot counts
    /// as marked.
    fn is_marked(&self, n: NodeRef) -> bool;

    /// One attempt to swing `n`'s link from `expected` to `new` (both
    /// unmarked). Failure folds together concurrent change, marking, and slot
    /// reuse; callers cannot and need not distinguish them.
    fn update_link(&self, n: NodeRef, expected: Option<NodeRef>, new: Option<NodeRef>) -> bool;

    /// One attempt to set the mark bit on `n`'s link, freezing it. Returns
    /// false when `n` is already marked, superseded, or concurrently changed.
    fn mark(&self, n: NodeRef) -> bool;

    /// Successful epoch advances (0 for schemes without one).
    fn epoch_advances(&self) -> u64 {
        0
    }

    /// Restarts answered by this context.
    fn ctx_restarts(ctx: &Self::Ctx) -> u64 {
        let _ = ctx;
        0
    }

    /// Peak length of this context's not-yet-recycled retiree backlog.
    fn ctx_peak_backlog(ctx: &Self::Ctx) -> usize {
        let _ = ctx;
        0
    }
}
