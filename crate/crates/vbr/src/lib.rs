//! Version-based reclamation (VBR) for lock-free data structures.
//!
//! Reclaimed memory may be read, and even written, by threads holding stale
//! references. Safety comes from versioning instead of deferral: every node
//! slot carries a birth epoch and a retire epoch, every link pairs its target
//! with an epoch-valued version, and the pair is updated atomically with a
//! double-width compare-exchange. A slot is only rebirthed in an epoch
//! strictly later than its previous retirement, so any compare-exchange whose
//! expected version predates the rebirth fails, and any read performed under
//! a stale cached epoch is detected and unwound to the caller's last
//! checkpoint.
//!
//! The crate provides:
//!
//! - the reclamation mechanism itself ([`Vbr`]): global epoch, versioned node
//!   cells, checkpoint/rollback, and a fixed-size slot arena with per-thread
//!   allocation and retired lists ([`Arena`]);
//! - lock-free sets built over it: a sorted linked list ([`VList`]) and a
//!   hash table of such lists ([`VHashTable`]), written once against the
//!   [`Reclaimer`] interface;
//! - comparison schemes behind the same interface: epoch-based reclamation
//!   ([`Ebr`]) and never-reclaim ([`NoRecl`]);
//! - a verification harness ([`verify`]): sequential oracle replay, concurrent
//!   per-key accounting, a scripted ABA interleaving, and directed invariant
//!   tests backed by a debug recorder;
//! - a fixed-time throughput benchmark runner ([`bench`]) with CSV output.
//!
//! Platform note: links are 128-bit atomics; on x86-64 this requires
//! `cmpxchg16b` (checked at runtime by `portable-atomic`).

pub mod baselines;
pub mod bench;
pub mod cell;
pub mod epoch;
pub mod hooks;
pub mod invariants;
pub mod pool;
pub mod reclaim;
pub mod structures;
pub mod vbr;
pub mod verify;

pub use baselines::{Ebr, EbrCtx, LeakCtx, NoRecl};
pub use cell::{Key, LinkState, NodeCell, NodeRef, SlotId, VersionedLink};
pub use epoch::{Epoch, GlobalEpoch};
pub use invariants::InvariantRecorder;
pub use pool::{Arena, ArenaError, LocalList, PoolConfig, PoolCtx, PoolExhausted};
pub use reclaim::{Outcome, Reclaimer, Restart, SchemeKind};
pub use structures::{Set, VHashTable, VList};
pub use vbr::{ThreadCtx, Vbr};
