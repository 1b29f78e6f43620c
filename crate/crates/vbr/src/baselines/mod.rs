//! Comparison reclamation schemes behind the same interface: epoch-based
//! reclamation with announcements, and a leak-everything baseline.

mod ebr;
mod none;

pub use ebr::{Ebr, EbrCtx};
pub use none::{LeakCtx, NoRecl};
