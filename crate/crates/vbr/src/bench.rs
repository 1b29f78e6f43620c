//! Throughput harness shared by the command line tool and the smoke checks.
//!
//! A run builds a fresh scheme and structure per repetition, prefills half
//! the key range, then drives a fixed operation mix from every worker until
//! the deadline (or an exact operation budget, for reproducible runs).

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{Ebr, NoRecl};
use crate::cell::Key;
use crate::pool::{PoolConfig, PoolExhausted};
use crate::reclaim::{Reclaimer, SchemeKind};
use crate::structures::{Set, VHashTable, VList};
use crate::vbr::Vbr;

/// Structure selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsKind {
    List,
    Hash,
}

impl DsKind {
    pub const ALL: [DsKind; 2] = [DsKind::List, DsKind::Hash];

    pub fn as_str(self) -> &'static str {
        match self {
            DsKind::List => "list",
            DsKind::Hash => "hash",
        }
    }
}

impl fmt::Display for DsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DsKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "list" => Ok(DsKind::List),
            "hash" => Ok(DsKind::Hash),
            other => Err(format!("unknown structure {other:?}, expected list or hash")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum OpChoice {
    Add,
    Remove,
    Read,
}

/// Operation mix in percent, written `<adds>i<removes>d<reads>r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkloadProfile {
    pub adds: u8,
    pub removes: u8,
    pub reads: u8,
}

impl WorkloadProfile {
    /// Maps a uniform roll in 0..100 to an operation.
    pub fn pick(&self, roll: u8) -> OpChoice {
        debug_assert!(roll < 100);
        if roll < self.adds {
            OpChoice::Add
        } else if roll < self.adds + self.removes {
            OpChoice::Remove
        } else {
            OpChoice::Read
        }
    }
}

impl fmt::Display for WorkloadProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}i{}d{}r", self.adds, self.removes, self.reads)
    }
}

impl FromStr for WorkloadProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed profile {s:?}, expected like 25i25d50r");
        let (a, rest) = s.split_once('i').ok_or_else(bad)?;
        let (d, rest) = rest.split_once('d').ok_or_else(bad)?;
        let r = rest.strip_suffix('r').ok_or_else(bad)?;
        let adds: u8 = a.parse().map_err(|_| bad())?;
        let removes: u8 = d.parse().map_err(|_| bad())?;
        let reads: u8 = r.parse().map_err(|_| bad())?;
        let sum = adds as u32 + removes as u32 + reads as u32;
        if sum != 100 {
            return Err(format!("profile {s:?} sums to {sum}, expected 100"));
        }
        Ok(Self { adds, removes, reads })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub scheme: SchemeKind,
    pub ds: DsKind,
    pub threads: usize,
    pub key_range: Key,
    pub profile: WorkloadProfile,
    pub duration_ms: u64,
    pub seed: u64,
    pub reps: u32,
    /// When set, every worker runs exactly its share of this many operations
    /// instead of racing the clock. Makes the `ops` column reproducible.
    pub ops_limit: Option<u64>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        if self.key_range < 2 {
            return Err("key range must be at least 2".into());
        }
        if self.reps == 0 {
            return Err("reps must be at least 1".into());
        }
        if self.duration_ms == 0 && self.ops_limit.is_none() {
            return Err("duration must be at least 1 ms".into());
        }
        Ok(())
    }
}

/// One averaged result line.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub scheme: SchemeKind,
    pub structure: DsKind,
    pub threads: usize,
    pub key_range: Key,
    pub profile: WorkloadProfile,
    pub duration_ms: u64,
    pub ops: u64,
    pub mops: f64,
    pub epoch_advances: u64,
    pub restarts: u64,
}

pub const CSV_HEADER: &str =
    "scheme,structure,threads,key_range,profile,duration_ms,ops,mops,epoch_advances,restarts";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{},{}",
            self.scheme,
            self.structure,
            self.threads,
            self.key_range,
            self.profile,
            self.duration_ms,
            self.ops,
            self.mops,
            self.epoch_advances,
            self.restarts,
        )
    }
}

pub fn write_csv<W: io::Write>(w: &mut W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(String),
    #[error("arena exhausted while building or prefilling the structure")]
    Setup(#[from] PoolExhausted),
}

/// Bucket count used for the hash structure at a given key range.
pub fn default_buckets(key_range: Key) -> usize {
    ((key_range as usize) / 8).max(1).next_power_of_two()
}

fn pool_config(cfg: &BenchConfig) -> PoolConfig {
    let buckets = match cfg.ds {
        DsKind::List => 1,
        DsKind::Hash => default_buckets(cfg.key_range),
    };
    PoolConfig {
        // Sentinels, the live set, and churn headroom all fit per thread, so
        // only the leaking scheme can run the arena dry.
        slots_per_thread: 2 * buckets + cfg.key_range as usize + 512,
        ..PoolConfig::default()
    }
    .apply_env()
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRow, BenchError> {
    cfg.validate().map_err(BenchError::Config)?;
    let pool = pool_config(cfg);
    // One extra registrant: the coordinating thread builds and prefills.
    let slots = cfg.threads + 1;
    let buckets = default_buckets(cfg.key_range);
    match (cfg.scheme, cfg.ds) {
        (SchemeKind::Vbr, DsKind::List) => run_reps(
            cfg,
            || Arc::new(Vbr::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VList::new(Arc::clone(r), ctx),
        ),
        (SchemeKind::Vbr, DsKind::Hash) => run_reps(
            cfg,
            || Arc::new(Vbr::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VHashTable::new(Arc::clone(r), ctx, buckets),
        ),
        (SchemeKind::Ebr, DsKind::List) => run_reps(
            cfg,
            || Arc::new(Ebr::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VList::new(Arc::clone(r), ctx),
        ),
        (SchemeKind::Ebr, DsKind::Hash) => run_reps(
            cfg,
            || Arc::new(Ebr::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VHashTable::new(Arc::clone(r), ctx, buckets),
        ),
        (SchemeKind::None, DsKind::List) => run_reps(
            cfg,
            || Arc::new(NoRecl::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VList::new(Arc::clone(r), ctx),
        ),
        (SchemeKind::None, DsKind::Hash) => run_reps(
            cfg,
            || Arc::new(NoRecl::new(slots, pool).expect("nonzero arena")),
            |r, ctx| VHashTable::new(Arc::clone(r), ctx, buckets),
        ),
    }
}

fn run_reps<R, S, FSch, FSet>(
    cfg: &BenchConfig,
    make_scheme: FSch,
    make_set: FSet,
) -> Result<BenchRow, BenchError>
where
    R: Reclaimer,
    S: Set<R>,
    FSch: Fn() -> Arc<R>,
    FSet: Fn(&Arc<R>, &mut R::Ctx) -> Result<S, PoolExhausted>,
{
    let mut total_ops = 0u64;
    let mut total_secs = 0f64;
    let mut advances = 0u64;
    let mut restarts = 0u64;
    for rep in 0..cfg.reps {
        // Fresh scheme per repetition: epoch counters start cold each time.
        let r = make_scheme();
        let mut ctx = r.register();
        let set = make_set(&r, &mut ctx)?;
        prefill(&set, &mut ctx, cfg, rep)?;
        let (ops, secs, rs) = drive(&r, &set, cfg, rep);
        total_ops += ops;
        total_secs += secs;
        advances += r.epoch_advances();
        restarts += rs;
    }
    let reps = cfg.reps as u64;
    Ok(BenchRow {
        scheme: cfg.scheme,
        structure: cfg.ds,
        threads: cfg.threads,
        key_range: cfg.key_range,
        profile: cfg.profile,
        duration_ms: cfg.duration_ms,
        ops: total_ops / reps,
        mops: (total_ops as f64 / total_secs) / 1e6,
        epoch_advances: advances / reps,
        restarts: restarts / reps,
    })
}

fn prefill<R: Reclaimer, S: Set<R>>(
    set: &S,
    ctx: &mut R::Ctx,
    cfg: &BenchConfig,
    rep: u32,
) -> Result<(), PoolExhausted> {
    let want = (cfg.key_range / 2) as usize;
    let mut keys: Vec<Key> = (1..=cfg.key_range).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((rep as u64 + 1) << 48));
    // Partial shuffle: the first `want` positions are a uniform sample.
    for i in 0..want {
        let j = rng.gen_range(i..keys.len());
        keys.swap(i, j);
    }
    for &k in &keys[..want] {
        let fresh = set.add(ctx, k)?;
        debug_assert!(fresh, "prefill keys are distinct");
    }
    Ok(())
}

fn drive<R: Reclaimer, S: Set<R>>(
    r: &Arc<R>,
    set: &S,
    cfg: &BenchConfig,
    rep: u32,
) -> (u64, f64, u64) {
    let stop = AtomicBool::new(false);
    let deadline = Duration::from_millis(cfg.duration_ms);
    let per_thread = cfg.ops_limit.map(|l| (l / cfg.threads as u64).max(1));
    let started = Instant::now();
    let (ops, restarts) = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(cfg.threads);
        for t in 0..cfg.threads {
            let r = Arc::clone(r);
            let stop = &stop;
            handles.push(s.spawn(move || {
                let mut ctx = r.register();
                let mut rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed ^ ((rep as u64 + 1) << 32) ^ ((t as u64 + 1) << 16),
                );
                let mut ops = 0u64;
                loop {
                    match per_thread {
                        Some(limit) => {
                            if ops >= limit {
                                break;
                            }
                        }
                        None => {
                            if ops % 64 == 0
                                && (stop.load(Ordering::Relaxed) || started.elapsed() >= deadline)
                            {
                                stop.store(true, Ordering::Relaxed);
                                break;
                            }
                        }
                    }
                    let roll: u8 = rng.gen_range(0..100);
                    let k = rng.gen_range(1..=cfg.key_range);
                    match cfg.profile.pick(roll) {
                        // A dry arena fails the add but the op still counts;
                        // only the leaking scheme ever gets here.
                        OpChoice::Add => {
                            let _ = set.add(&mut ctx, k);
                        }
                        OpChoice::Remove => {
                            set.remove(&mut ctx, k);
                        }
                        OpChoice::Read => {
                            set.contains(&mut ctx, k);
                        }
                    }
                    ops += 1;
                }
                (ops, R::ctx_restarts(&ctx))
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .fold((0u64, 0u64), |acc, x| (acc.0 + x.0, acc.1 + x.1))
    });
    (ops, started.elapsed().as_secs_f64(), restarts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_parses_and_prints() {
        let p: WorkloadProfile = "25i25d50r".parse().unwrap();
        assert_eq!(p, WorkloadProfile { adds: 25, removes: 25, reads: 50 });
        assert_eq!(p.to_string(), "25i25d50r");
        assert_eq!("0i0d100r".parse::<WorkloadProfile>().unwrap().reads, 100);
        assert!("25i25d49r".parse::<WorkloadProfile>().is_err());
        assert!("25i25d50".parse::<WorkloadProfile>().is_err());
        assert!("x".parse::<WorkloadProfile>().is_err());
    }

    #[test]
    fn mix_fractions_hold() {
        let p: WorkloadProfile = "30i20d50r".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0u64; 3];
        let draws = 1_000_000u64;
        for _ in 0..draws {
            match p.pick(rng.gen_range(0..100)) {
                OpChoice::Add => counts[0] += 1,
                OpChoice::Remove => counts[1] += 1,
                OpChoice::Read => counts[2] += 1,
            }
        }
        let tol = draws / 100;
        assert!(counts[0].abs_diff(draws * 30 / 100) < tol, "{counts:?}");
        assert!(counts[1].abs_diff(draws * 20 / 100) < tol, "{counts:?}");
        assert!(counts[2].abs_diff(draws * 50 / 100) < tol, "{counts:?}");
    }

    #[test]
    fn ops_budget_is_reproducible() {
        let cfg = BenchConfig {
            scheme: SchemeKind::Vbr,
            ds: DsKind::List,
            threads: 2,
            key_range: 64,
            profile: "25i25d50r".parse().unwrap(),
            duration_ms: 10_000,
            seed: 42,
            reps: 1,
            ops_limit: Some(20_000),
        };
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.ops, 20_000);
        assert_eq!(a.ops, b.ops);
    }

    #[test]
    fn csv_shape_is_stable() {
        assert_eq!(CSV_HEADER.split(',').count(), 10);
        let cfg = BenchConfig {
            scheme: SchemeKind::Ebr,
            ds: DsKind::Hash,
            threads: 1,
            key_range: 32,
            profile: "50i50d0r".parse().unwrap(),
            duration_ms: 10,
            seed: 1,
            reps: 2,
            ops_limit: None,
        };
        let row = run_benchmark(&cfg).unwrap();
        assert!(row.ops > 0);
        assert!(row.mops > 0.0);
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), 10);
        assert!(line.starts_with("ebr,hash,1,32,50i50d0r,10,"));
        let mut out = Vec::new();
        write_csv(&mut out, &[row]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn zero_threads_is_rejected() {
        let cfg = BenchConfig {
            scheme: SchemeKind::Vbr,
            ds: DsKind::List,
            threads: 0,
            key_range: 32,
            profile: "25i25d50r".parse().unwrap(),
            duration_ms: 10,
            seed: 1,
            reps: 1,
            ops_limit: None,
        };
        assert!(matches!(run_benchmark(&cfg), Err(BenchError::Config(_))));
    }
}
