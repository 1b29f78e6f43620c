//! Correctness harnesses: reference comparison, concurrent accounting,
//! recycling experiments, and scripted interference.
//!
//! Every harness returns a report instead of asserting, so callers decide
//! whether a deviation fails a test or just gets printed.

mod aba;
mod accounting;
mod claims;
mod oracle;
mod sequential;
mod trace;

#[cfg(feature = "mutation")]
pub use aba::run_aba_mutated;
pub use aba::{run_aba_guarded, AbaReport};
pub use accounting::{run_accounting, AccountingReport};
pub use claims::{
    run_bounded_memory, run_directed_reuse, run_forced_rollbacks, run_reuse_churn, BoundedReport,
    ChurnReport, DirectedReport, RollbackReport,
};
pub use oracle::OracleSet;
pub use sequential::{run_sequential, SequentialReport};
pub use trace::{OpKind, OpTrace};
