//! Recycling pressure, directed reuse, forced restarts, and the suspended
//! reader comparison.
//!
//! These harnesses squeeze the reclamation machinery from the directions the
//! design cares about: slots must recycle under contention without any
//! lifetime rule tripping, reuse must always pass through an epoch advance,
//! interrupted operations must leave no slot stranded, and a thread parked
//! mid-operation must not starve the others of memory.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{Ebr, NoRecl};
use crate::cell::{Key, SlotId};
use crate::hooks::{self, PausePoint};
use crate::pool::{PoolConfig, PoolExhausted};
use crate::reclaim::{Reclaimer, Restart, SchemeKind};
use crate::structures::{Set, VHashTable, VList};
use crate::vbr::Vbr;

pub struct ChurnReport {
    pub ops: u64,
    pub reuses: u64,
    pub violations: u64,
    pub write_site_violations: u64,
}

/// Hammers a small list with adds and removes over an arena sized to force
/// slot recycling on nearly every allocation, and keeps going until the
/// recorder has seen `target_reuses` slot reuses.
pub fn run_reuse_churn(target_reuses: u64, threads: usize, seed: u64) -> ChurnReport {
    assert!(threads >= 1, "churn needs at least one worker");
    let vbr = Arc::new(
        Vbr::with_recorder(
            threads + 1,
            PoolConfig { slots_per_thread: 96, retired_threshold: 1, steal_batch: 8 },
        )
        .expect("nonzero arena"),
    );
    let mut main_ctx = vbr.register();
    let list =
        Arc::new(VList::new(Arc::clone(&vbr), &mut main_ctx).expect("arena holds the sentinels"));
    const RANGE: Key = 16;
    let stop = AtomicBool::new(false);
    let total_ops = AtomicU64::new(0);
    std::thread::scope(|s| {
        for t in 0..threads {
            let vbr = Arc::clone(&vbr);
            let list = Arc::clone(&list);
            let (stop, total_ops) = (&stop, &total_ops);
            s.spawn(move || {
                let mut ctx = vbr.register();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64 + 1) << 32));
                let mut ops = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    let key = rng.gen_range(1..=RANGE);
                    if rng.gen_bool(0.5) {
                        // Removals park a slot in the remover's partition, so
                        // ownership drifts between workers over time; a dry
                        // spell just means the excess sits elsewhere until the
                        // hoarder's next donation.
                        while list.add(&mut ctx, key).is_err() {
                            if stop.load(Ordering::Relaxed) {
                                break;
                            }
                            std::thread::yield_now();
                        }
                    } else {
                        list.remove(&mut ctx, key);
                    }
                    ops += 1;
                    let excess = ctx.alloc_len().saturating_sub(24);
                    if ops % 32 == 0 && excess > 0 {
                        vbr.donate_to_global(&mut ctx, excess);
                    }
                    if ops % 256 == 0
                        && vbr.recorder().expect("recorder attached").reuses() >= target_reuses
                    {
                        stop.store(true, Ordering::Relaxed);
                    }
                }
                total_ops.fetch_add(ops, Ordering::Relaxed);
            });
        }
    });
    let rec = vbr.recorder().expect("recorder attached");
    ChurnReport {
        ops: total_ops.load(Ordering::Relaxed),
        reuses: rec.reuses(),
        violations: rec.violations(),
        write_site_violations: rec.write_site_violations(),
    }
}

pub struct DirectedReport {
    pub rounds: u32,
    pub clean: u32,
    /// Deviating rounds, described (bounded).
    pub divergences: Vec<String>,
}

/// Replays the minimal reuse story on a fresh scheme each round: retire a
/// slot, steer the next allocation onto it, and check the exact sequence the
/// design promises: one refused allocation, exactly one epoch advance, then
/// the same slot reborn under the new epoch.
pub fn run_directed_reuse(rounds: u32) -> DirectedReport {
    let mut report = DirectedReport { rounds, clean: 0, divergences: Vec::new() };
    for round in 0..rounds {
        match directed_round() {
            Ok(()) => report.clean += 1,
            Err(line) => {
                if report.divergences.len() < 16 {
                    report.divergences.push(format!("round={round} {line}"));
                }
            }
        }
    }
    report
}

fn directed_round() -> Result<(), String> {
    let v = Vbr::with_recorder(
        1,
        PoolConfig { slots_per_thread: 4, retired_threshold: 1, steal_batch: 2 },
    )
    .map_err(|e| format!("arena: {e}"))?;
    let mut ctx = v.register();
    v.checkpoint_install(&mut ctx);
    let n = match v.alloc(&mut ctx, 7) {
        Ok(Ok(n)) => n,
        other => return Err(format!("first alloc on a fresh arena: {other:?}")),
    };
    v.note_published(&mut ctx, n);
    if !v.mark(n) {
        return Err("uncontested mark refused".into());
    }
    v.record_pending_retire(&mut ctx, n);
    if v.retire(&mut ctx, n) != Ok(()) {
        return Err("retire restarted under a still epoch".into());
    }
    v.end_op(&mut ctx);
    // Leave the retired slot as the only allocation candidate.
    let _parked = v.drain_local_free(&mut ctx);
    v.checkpoint_install(&mut ctx);
    let advances_before = v.epoch().advances();
    match v.alloc(&mut ctx, 8) {
        Ok(Err(Restart)) => {}
        other => return Err(format!("reuse handed out without a restart: {other:?}")),
    }
    let advanced = v.epoch().advances() - advances_before;
    if advanced != 1 {
        return Err(format!("expected exactly one epoch advance, saw {advanced}"));
    }
    if v.epoch().read() != 2 {
        return Err(format!("epoch should stand at 2, reads {}", v.epoch().read()));
    }
    v.rollback(&mut ctx);
    let m = match v.alloc(&mut ctx, 8) {
        Ok(Ok(m)) => m,
        other => return Err(format!("post-rollback alloc: {other:?}")),
    };
    if m.slot != n.slot {
        return Err(format!("expected slot {} back, got {}", n.slot, m.slot));
    }
    if m.birth != 2 {
        return Err(format!("rebirth must carry epoch 2, carries {}", m.birth));
    }
    v.abandon(&mut ctx, m);
    v.end_op(&mut ctx);
    let rec = v.recorder().expect("recorder attached");
    if rec.reuses() != 1 || rec.violations() != 0 {
        return Err(format!(
            "recorder saw reuses={} violations={}",
            rec.reuses(),
            rec.violations()
        ));
    }
    Ok(())
}

pub struct RollbackReport {
    pub rollbacks: u64,
    pub ops: u64,
    /// Whether every arena slot was found exactly once at quiescence: on the
    /// chain, in a free list, or in a retired list.
    pub census_ok: bool,
    pub violations: u64,
    pub divergences: Vec<String>,
}

/// Churns a list while epoch advances are injected at random pause points
/// inside reads, writes, and retirements, so operations keep unwinding to
/// their checkpoints. At quiescence, takes a census of every slot: each must
/// be reachable on the chain or parked in exactly one pool list. A restart
/// that dropped a retirement duty would leave a slot in none of them.
pub fn run_forced_rollbacks(min_rollbacks: u64, seed: u64) -> RollbackReport {
    const WORKERS: usize = 2;
    const RANGE: Key = 16;
    let vbr = Arc::new(
        Vbr::with_recorder(
            WORKERS + 1,
            PoolConfig { slots_per_thread: 256, retired_threshold: 2, steal_batch: 8 },
        )
        .expect("nonzero arena"),
    );
    let mut main_ctx = vbr.register();
    let list =
        Arc::new(VList::new(Arc::clone(&vbr), &mut main_ctx).expect("arena holds the sentinels"));

    // With the pause hooks compiled in, advances strike inside the primitives
    // at the three exposed points. Otherwise a disturber thread supplies
    // coarser interference from outside.
    let guard = hooks::compiled_in().then(|| {
        let epoch_holder = Arc::clone(&vbr);
        let dice = Mutex::new(ChaCha8Rng::seed_from_u64(seed));
        hooks::install(move |point, _tag| {
            let hit = {
                let mut rng = dice.lock().unwrap_or_else(|e| e.into_inner());
                match point {
                    PausePoint::AfterReadLink => rng.gen_ratio(1, 8),
                    PausePoint::BeforeCas => rng.gen_ratio(1, 32),
                    PausePoint::AfterRetire => rng.gen_ratio(1, 32),
                }
            };
            if hit {
                let e = epoch_holder.epoch();
                e.try_advance(e.read());
            }
        })
    });

    let rollbacks = AtomicU64::new(0);
    let total_ops = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let worker_ctxs = std::thread::scope(|s| {
        let disturber = (!hooks::compiled_in()).then(|| {
            let vbr = Arc::clone(&vbr);
            let stop = &stop;
            s.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let e = vbr.epoch();
                    e.try_advance(e.read());
                    std::thread::yield_now();
                }
            })
        });
        let mut handles = Vec::new();
        for t in 0..WORKERS {
            let vbr = Arc::clone(&vbr);
            let list = Arc::clone(&list);
            let (rollbacks, total_ops, stop) = (&rollbacks, &total_ops, &stop);
            handles.push(s.spawn(move || {
                hooks::set_thread_tag(t as u64 + 1);
                let mut ctx = vbr.register();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64 + 1) << 16));
                let mut counted = 0u64;
                let mut ops = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    let key = rng.gen_range(1..=RANGE);
                    match rng.gen_range(0..3u8) {
                        0 => {
                            list.add(&mut ctx, key).expect("arena outsizes the key range");
                        }
                        1 => {
                            list.remove(&mut ctx, key);
                        }
                        _ => {
                            list.contains(&mut ctx, key);
                        }
                    }
                    ops += 1;
                    let seen = ctx.restarts();
                    rollbacks.fetch_add(seen - counted, Ordering::Relaxed);
                    counted = seen;
                    if rollbacks.load(Ordering::Relaxed) >= min_rollbacks {
                        stop.store(true, Ordering::Relaxed);
                    }
                }
                hooks::set_thread_tag(0);
                total_ops.fetch_add(ops, Ordering::Relaxed);
                ctx
            }));
        }
        let ctxs: Vec<_> =
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
        if let Some(d) = disturber {
            d.join().expect("disturber panicked");
        }
        ctxs
    });
    drop(guard);

    let mut divergences = Vec::new();
    let marked = list.quiescent_marked(&mut main_ctx);
    if marked != 0 {
        divergences.push(format!("{marked} marked nodes still reachable"));
    }
    let mut accounted = list.quiescent_slots(&mut main_ctx);
    for ctx in worker_ctxs.iter().chain(std::iter::once(&main_ctx)) {
        accounted.extend(ctx.pool().alloc.iter(vbr.arena()));
        accounted.extend(ctx.pool().retired.iter(vbr.arena()));
    }
    let shared = vbr.arena().global_len();
    if shared != 0 {
        divergences.push(format!("{shared} slots sit in the shared pool"));
    }
    accounted.sort_unstable();
    let expected: Vec<SlotId> = (0..vbr.arena().capacity()).map(|s| s as SlotId).collect();
    if accounted != expected {
        let missing =
            expected.iter().filter(|s| accounted.binary_search(s).is_err()).count();
        let surplus = accounted.len() + missing - expected.len();
        divergences.push(format!(
            "census mismatch: {missing} slots unaccounted for, {surplus} counted twice"
        ));
    }
    let rec = vbr.recorder().expect("recorder attached");
    RollbackReport {
        rollbacks: rollbacks.load(Ordering::Relaxed),
        ops: total_ops.load(Ordering::Relaxed),
        census_ok: divergences.is_empty(),
        violations: rec.violations() + rec.write_site_violations(),
        divergences,
    }
}

pub struct BoundedReport {
    pub ops: u64,
    /// Workers that ran the arena dry (each stops at its first failure).
    pub exhausted: u64,
    /// Largest not-yet-recycled backlog any worker accumulated.
    pub peak_backlog: usize,
}

/// One registered context enters an operation and never finishes it while
/// seven workers churn a hash table. Deferral-based reclamation must hold
/// every retiree for the sleeper and eventually runs the arena dry;
/// version-based recycling reuses slots regardless.
pub fn run_bounded_memory(scheme: SchemeKind, total_ops: u64) -> BoundedReport {
    let cfg = PoolConfig { slots_per_thread: 4096, retired_threshold: 64, steal_batch: 32 };
    match scheme {
        SchemeKind::Vbr => {
            bounded_under(Arc::new(Vbr::new(8, cfg).expect("nonzero arena")), total_ops)
        }
        SchemeKind::Ebr => {
            bounded_under(Arc::new(Ebr::new(8, cfg).expect("nonzero arena")), total_ops)
        }
        SchemeKind::None => {
            bounded_under(Arc::new(NoRecl::new(8, cfg).expect("nonzero arena")), total_ops)
        }
    }
}

fn bounded_under<R: Reclaimer>(r: Arc<R>, total_ops: u64) -> BoundedReport {
    const RANGE: Key = 256;
    const WORKERS: u64 = 7;
    let mut main_ctx = r.register();
    let table = Arc::new(
        VHashTable::new(Arc::clone(&r), &mut main_ctx, 32).expect("arena holds the buckets"),
    );
    for key in (2..RANGE).step_by(2) {
        table.add(&mut main_ctx, key).expect("arena holds the prefill");
    }
    // The suspended reader: an operation is entered and never closed.
    r.checkpoint_install(&mut main_ctx);
    let per_worker = total_ops.div_ceil(WORKERS);
    let exhausted = AtomicU64::new(0);
    let ops_done = AtomicU64::new(0);
    let peak = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for t in 0..WORKERS {
            let r = Arc::clone(&r);
            let table = Arc::clone(&table);
            let (exhausted, ops_done, peak) = (&exhausted, &ops_done, &peak);
            s.spawn(move || {
                let mut ctx = r.register();
                let mut rng = ChaCha8Rng::seed_from_u64(0xB0 ^ ((t + 1) << 24));
                let mut ops = 0u64;
                for _ in 0..per_worker {
                    let key = rng.gen_range(1..=RANGE);
                    if rng.gen_bool(0.5) {
                        match table.add(&mut ctx, key) {
                            Ok(_) => {}
                            Err(PoolExhausted) => {
                                exhausted.fetch_add(1, Ordering::Relaxed);
                                break;
                            }
                        }
                    } else {
                        table.remove(&mut ctx, key);
                    }
                    ops += 1;
                }
                ops_done.fetch_add(ops, Ordering::Relaxed);
                peak.fetch_max(R::ctx_peak_backlog(&ctx), Ordering::Relaxed);
            });
        }
    });
    r.end_op(&mut main_ctx);
    BoundedReport {
        ops: ops_done.load(Ordering::Relaxed),
        exhausted: exhausted.load(Ordering::Relaxed),
        peak_backlog: peak.load(Ordering::Relaxed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn churn_recycles_without_tripping_a_rule() {
        let rep = run_reuse_churn(5_000, 2, 11);
        assert!(rep.reuses >= 5_000);
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.write_site_violations, 0);
        assert!(rep.ops > 0);
    }

    #[test]
    fn directed_reuse_replays_exactly() {
        let rep = run_directed_reuse(25);
        assert_eq!(rep.clean, 25, "{:?}", rep.divergences);
    }

    #[test]
    fn interrupted_operations_strand_no_slot() {
        let rep = run_forced_rollbacks(200, 7);
        assert!(rep.rollbacks >= 200);
        assert!(rep.census_ok, "{:?}", rep.divergences);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn a_sleeping_reader_starves_deferral_but_not_versioning() {
        let under_vbr = run_bounded_memory(SchemeKind::Vbr, 200_000);
        assert_eq!(under_vbr.exhausted, 0);
        assert_eq!(under_vbr.ops, 200_004);
        let under_ebr = run_bounded_memory(SchemeKind::Ebr, 200_000);
        assert!(under_ebr.exhausted > 0);
        assert!(under_ebr.peak_backlog > 10 * under_vbr.peak_backlog.max(1));
    }
}
