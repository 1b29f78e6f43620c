//! Lock-free ordered sets built on the reclamation interface.
//!
//! The structures never examine which scheme is underneath: every read and
//! every link update goes through [`Reclaimer`], and a `Restart` unwinds the
//! running operation to its last checkpoint.

mod hash;
mod list;

pub use hash::VHashTable;
pub use list::VList;

use crate::cell::Key;
use crate::pool::PoolExhausted;
use crate::reclaim::Reclaimer;

/// Concurrent set of keys.
pub trait Set<R: Reclaimer>: Send + Sync {
    /// Inserts `key`; `Ok(false)` if it was already present.
    fn add(&self, ctx: &mut R::Ctx, key: Key) -> Result<bool, PoolExhausted>;

    /// Deletes `key`; `false` if it was absent.
    fn remove(&self, ctx: &mut R::Ctx, key: Key) -> bool;

    /// Membership test.
    fn contains(&self, ctx: &mut R::Ctx, key: Key) -> bool;
}
