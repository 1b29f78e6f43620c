//! Concurrent accounting stress: per-key success counters must balance the
//! final contents.
//!
//! Every successful add and remove bumps a per-key counter. At quiescence,
//! each key must have been removed either exactly as often as it was added
//! (absent) or one time fewer (present). Any other ledger is a lost or
//! duplicated update.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{Ebr, NoRecl};
use crate::bench::{default_buckets, DsKind};
use crate::cell::Key;
use crate::pool::PoolConfig;
use crate::reclaim::{Reclaimer, SchemeKind};
use crate::structures::{Set, VHashTable, VList};
use crate::vbr::Vbr;

pub struct AccountingReport {
    pub ops: u64,
    pub adds: u64,
    pub removes: u64,
    /// Failed allocations; nonzero only for the leaking scheme.
    pub exhausted: u64,
    pub divergences: Vec<String>,
    pub peak_backlog: usize,
    pub restarts: u64,
    pub epoch_advances: u64,
}

impl AccountingReport {
    pub fn clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

struct KeyLedger {
    adds: AtomicU64,
    removes: AtomicU64,
}

/// Runs `threads` workers over one structure for `millis`, then audits.
pub fn run_accounting(
    scheme: SchemeKind,
    ds: DsKind,
    threads: usize,
    millis: u64,
    key_range: Key,
    seed: u64,
) -> AccountingReport {
    let buckets = default_buckets(key_range);
    let config = PoolConfig {
        slots_per_thread: 2 * buckets + key_range as usize + 4096,
        retired_threshold: 32,
        steal_batch: 16,
    };
    let slots = threads + 1;
    match scheme {
        SchemeKind::Vbr => with_scheme(
            Arc::new(Vbr::new(slots, config).expect("nonzero arena")),
            ds,
            threads,
            millis,
            key_range,
            seed,
        ),
        SchemeKind::Ebr => with_scheme(
            Arc::new(Ebr::new(slots, config).expect("nonzero arena")),
            ds,
            threads,
            millis,
            key_range,
            seed,
        ),
        SchemeKind::None => with_scheme(
            Arc::new(NoRecl::new(slots, config).expect("nonzero arena")),
            ds,
            threads,
            millis,
            key_range,
            seed,
        ),
    }
}

fn with_scheme<R: Reclaimer>(
    r: Arc<R>,
    ds: DsKind,
    threads: usize,
    millis: u64,
    key_range: Key,
    seed: u64,
) -> AccountingReport {
    let mut ctx = r.register();
    match ds {
        DsKind::List => {
            let set = VList::new(Arc::clone(&r), &mut ctx).expect("arena sized for the run");
            drive(&r, &set, &mut ctx, threads, millis, key_range, seed)
        }
        DsKind::Hash => {
            let set = VHashTable::new(Arc::clone(&r), &mut ctx, default_buckets(key_range))
                .expect("arena sized for the run");
            drive(&r, &set, &mut ctx, threads, millis, key_range, seed)
        }
    }
}

fn drive<R: Reclaimer, S: Set<R>>(
    r: &Arc<R>,
    set: &S,
    main_ctx: &mut R::Ctx,
    threads: usize,
    millis: u64,
    key_range: Key,
    seed: u64,
) -> AccountingReport {
    let ledger: Vec<KeyLedger> = (0..=key_range as usize)
        .map(|_| KeyLedger { adds: AtomicU64::new(0), removes: AtomicU64::new(0) })
        .collect();

    // Prefill half the range so removers have work from the start.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<Key> = (1..=key_range).collect();
    let want = (key_range / 2) as usize;
    for i in 0..want {
        let j = rng.gen_range(i..keys.len());
        keys.swap(i, j);
    }
    for &k in &keys[..want] {
        if set.add(main_ctx, k).expect("arena sized for the prefill") {
            ledger[k as usize].adds.fetch_add(1, Ordering::Relaxed);
        }
    }

    let stop = AtomicBool::new(false);
    let deadline = Duration::from_millis(millis);
    let started = Instant::now();
    let totals = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(threads);
        for t in 0..threads {
            let r = Arc::clone(r);
            let stop = &stop;
            let ledger = &ledger;
            handles.push(s.spawn(move || {
                let mut ctx = r.register();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ ((t as u64 + 1).wrapping_mul(0x9E37_79B9)));
                let mut ops = 0u64;
                let mut adds = 0u64;
                let mut removes = 0u64;
                let mut exhausted = 0u64;
                loop {
                    if ops % 64 == 0
                        && (stop.load(Ordering::Relaxed) || started.elapsed() >= deadline)
                    {
                        stop.store(true, Ordering::Relaxed);
                        break;
                    }
                    let roll: u8 = rng.gen_range(0..100);
                    let k = rng.gen_range(1..=key_range);
                    if roll < 40 {
                        match set.add(&mut ctx, k) {
                            Ok(true) => {
                                ledger[k as usize].adds.fetch_add(1, Ordering::Relaxed);
                                adds += 1;
                            }
                            Ok(false) => {}
                            Err(_) => exhausted += 1,
                        }
                    } else if roll < 80 {
                        if set.remove(&mut ctx, k) {
                            ledger[k as usize].removes.fetch_add(1, Ordering::Relaxed);
                            removes += 1;
                        }
                    } else {
                        set.contains(&mut ctx, k);
                    }
                    ops += 1;
                }
                (ops, adds, removes, exhausted, R::ctx_peak_backlog(&ctx), R::ctx_restarts(&ctx))
            }));
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).fold(
            (0u64, 0u64, 0u64, 0u64, 0usize, 0u64),
            |acc, x| {
                (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2, acc.3 + x.3, acc.4.max(x.4), acc.5 + x.5)
            },
        )
    });

    // Audit: the ledger decides presence; the structure must agree.
    let mut divergences = Vec::new();
    for k in 1..=key_range {
        let a = ledger[k as usize].adds.load(Ordering::Relaxed);
        let d = ledger[k as usize].removes.load(Ordering::Relaxed);
        let present = set.contains(main_ctx, k);
        let balanced = d == a || d + 1 == a;
        if !balanced || present != (d + 1 == a) {
            if divergences.len() < 16 {
                divergences.push(format!(
                    "k={k} adds_ok={a} removes_ok={d} present={}",
                    present as u8
                ));
            }
        }
    }
    AccountingReport {
        ops: totals.0,
        adds: totals.1,
        removes: totals.2,
        exhausted: totals.3,
        divergences,
        peak_backlog: totals.4,
        restarts: totals.5,
        epoch_advances: r.epoch_advances(),
    }
}
