//! Single-threaded equivalence against the reference set.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{Ebr, NoRecl};
use crate::bench::{default_buckets, DsKind};
use crate::cell::Key;
use crate::pool::PoolConfig;
use crate::reclaim::{Reclaimer, SchemeKind};
use crate::structures::{Set, VHashTable, VList};
use crate::vbr::Vbr;
use crate::verify::oracle::OracleSet;
use crate::verify::trace::{OpKind, OpTrace};

pub struct SequentialReport {
    pub ops: u64,
    /// First few operations whose result differed from the reference.
    pub divergences: Vec<String>,
}

impl SequentialReport {
    pub fn clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Runs `ops` random operations one at a time, comparing every result with
/// the reference, then sweeps the whole key range once more.
pub fn run_sequential(
    scheme: SchemeKind,
    ds: DsKind,
    ops: u64,
    key_range: Key,
    seed: u64,
) -> SequentialReport {
    let buckets = default_buckets(key_range);
    let config = PoolConfig {
        // Covers the leaking scheme: one slot per attempted insert.
        slots_per_thread: ops as usize + 2 * buckets + 16,
        retired_threshold: 16,
        steal_batch: 8,
    };
    match scheme {
        SchemeKind::Vbr => {
            with_scheme(Arc::new(Vbr::new(1, config).expect("nonzero arena")), ds, ops, key_range, seed)
        }
        SchemeKind::Ebr => {
            with_scheme(Arc::new(Ebr::new(1, config).expect("nonzero arena")), ds, ops, key_range, seed)
        }
        SchemeKind::None => {
            with_scheme(Arc::new(NoRecl::new(1, config).expect("nonzero arena")), ds, ops, key_range, seed)
        }
    }
}

fn with_scheme<R: Reclaimer>(
    r: Arc<R>,
    ds: DsKind,
    ops: u64,
    key_range: Key,
    seed: u64,
) -> SequentialReport {
    let mut ctx = r.register();
    match ds {
        DsKind::List => {
            let set = VList::new(Arc::clone(&r), &mut ctx).expect("arena sized for the run");
            drive(&set, &mut ctx, ops, key_range, seed)
        }
        DsKind::Hash => {
            let set = VHashTable::new(Arc::clone(&r), &mut ctx, default_buckets(key_range))
                .expect("arena sized for the run");
            drive(&set, &mut ctx, ops, key_range, seed)
        }
    }
}

fn drive<R: Reclaimer, S: Set<R>>(
    set: &S,
    ctx: &mut R::Ctx,
    ops: u64,
    key_range: Key,
    seed: u64,
) -> SequentialReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = OracleSet::new();
    let mut divergences = Vec::new();
    let mut note = |kind, key, got: bool, want: bool, ts| {
        if got != want && divergences.len() < 16 {
            let line = OpTrace { thread: 0, kind, key, ok: got, ts };
            divergences.push(format!("{line} (reference says {})", want as u8));
        }
    };
    for ts in 0..ops {
        let roll: u8 = rng.gen_range(0..100);
        let key = rng.gen_range(1..=key_range);
        if roll < 35 {
            let got = set.add(ctx, key).expect("arena sized for the run");
            note(OpKind::Add, key, got, oracle.add(key), ts);
        } else if roll < 70 {
            note(OpKind::Remove, key, set.remove(ctx, key), oracle.remove(key), ts);
        } else {
            note(OpKind::Contains, key, set.contains(ctx, key), oracle.contains(key), ts);
        }
    }
    for key in 1..=key_range {
        note(
            OpKind::Contains,
            key,
            set.contains(ctx, key),
            oracle.contains(key),
            ops + key as u64,
        );
    }
    SequentialReport { ops, divergences }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scheme_tracks_the_reference() {
        for scheme in SchemeKind::ALL {
            for ds in DsKind::ALL {
                let rep = run_sequential(scheme, ds, 4000, 64, 11);
                assert!(rep.clean(), "{scheme}/{ds}: {:?}", rep.divergences);
                assert_eq!(rep.ops, 4000);
            }
        }
    }

    #[test]
    fn distinct_seeds_still_agree() {
        for seed in [1, 2, 3] {
            let rep = run_sequential(SchemeKind::Vbr, DsKind::List, 2000, 32, seed);
            assert!(rep.clean(), "seed {seed}: {:?}", rep.divergences);
        }
    }
}
