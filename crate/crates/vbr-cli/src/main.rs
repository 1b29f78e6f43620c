//! Workbench binary: `vbr bench` measures throughput and emits CSV, `vbr
//! verify` runs the correctness suites and exits nonzero on any failure.

use std::fs::File;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use vbr::bench::{run_benchmark, BenchConfig, DsKind, WorkloadProfile};
use vbr::verify::{
    run_aba_guarded, run_accounting, run_forced_rollbacks, run_reuse_churn, run_sequential,
};
use vbr::{Key, SchemeKind};

#[derive(Parser)]
#[command(name = "vbr", version, about = "Versioned-reclamation workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a fixed-time throughput benchmark and emit one CSV row.
    Bench(BenchArgs),
    /// Run the correctness suites; any divergence fails the command.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Reclamation scheme: vbr, ebr, or none.
    #[arg(long, default_value = "vbr")]
    scheme: SchemeKind,
    /// Data structure: list or hash.
    #[arg(long, default_value = "list")]
    ds: DsKind,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Keys are drawn uniformly from 1..=range.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(i64).range(2..))]
    range: Key,
    /// Operation mix in percent, written <adds>i<removes>d<reads>r.
    #[arg(long, default_value = "25i25d50r")]
    profile: WorkloadProfile,
    /// Measured duration per repetition, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    ms: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Repetitions averaged into the emitted row.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    reps: u32,
    /// Run an exact operation budget instead of racing the clock.
    #[arg(long)]
    ops_limit: Option<u64>,
    /// Write the CSV here instead of to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Suite {
    /// Random single-threaded ops replayed against a reference set.
    Sequential,
    /// Concurrent per-key add/remove ledger audited at quiescence.
    Accounting,
    /// Scripted stall-and-recycle interleaving; the stale write must fail.
    Interleaving,
    /// Recorder-audited slot recycling churn.
    Reuse,
    /// Forced mid-operation restarts followed by a full slot census.
    Rollback,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Suites to run, comma separated; all of them when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    suite: Vec<Suite>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Operations per sequential replay.
    #[arg(long, default_value_t = 20_000)]
    ops: u64,
    /// Duration of each accounting run, in milliseconds.
    #[arg(long, default_value_t = 250)]
    ms: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(i64).range(2..))]
    range: Key,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Bench(args) => bench_cmd(args),
        Cmd::Verify(args) => verify_cmd(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn bench_cmd(a: BenchArgs) -> anyhow::Result<bool> {
    let cfg = BenchConfig {
        scheme: a.scheme,
        ds: a.ds,
        threads: a.threads as usize,
        key_range: a.range,
        profile: a.profile,
        duration_ms: a.ms,
        seed: a.seed,
        reps: a.reps,
        ops_limit: a.ops_limit,
    };
    let row = run_benchmark(&cfg)?;
    let rows = [row];
    match &a.csv {
        Some(path) => {
            let mut f = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            vbr::bench::write_csv(&mut f, &rows)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            vbr::bench::write_csv(&mut stdout.lock(), &rows)?;
        }
    }
    Ok(true)
}

fn verify_cmd(a: VerifyArgs) -> anyhow::Result<bool> {
    let wanted = |s: Suite| a.suite.is_empty() || a.suite.contains(&s);
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("verify: {name} ... {}", if ok { "ok" } else { "FAILED" });
        println!("  {detail}");
        all_ok &= ok;
    };

    if wanted(Suite::Sequential) {
        let mut divergences = Vec::new();
        let mut ops = 0u64;
        for scheme in SchemeKind::ALL {
            for ds in DsKind::ALL {
                let rep = run_sequential(scheme, ds, a.ops, a.range, a.seed);
                ops += rep.ops;
                divergences
                    .extend(rep.divergences.into_iter().map(|d| format!("{scheme}/{ds}: {d}")));
            }
        }
        report(
            "sequential",
            divergences.is_empty(),
            format!("{ops} ops across 6 scheme/structure pairs; {divergences:?}"),
        );
    }

    if wanted(Suite::Accounting) {
        let mut divergences = Vec::new();
        let mut ops = 0u64;
        for scheme in SchemeKind::ALL {
            for ds in DsKind::ALL {
                let rep =
                    run_accounting(scheme, ds, a.threads as usize, a.ms, a.range, a.seed);
                ops += rep.ops;
                divergences
                    .extend(rep.divergences.into_iter().map(|d| format!("{scheme}/{ds}: {d}")));
            }
        }
        report(
            "accounting",
            divergences.is_empty(),
            format!("{ops} ops across 6 scheme/structure pairs; {divergences:?}"),
        );
    }

    if wanted(Suite::Interleaving) {
        let mut rejected = 0u32;
        const REPLAYS: u32 = 20;
        for _ in 0..REPLAYS {
            let rep = run_aba_guarded();
            if !rep.cas_succeeded && !rep.anomaly {
                rejected += 1;
            }
        }
        report(
            "interleaving",
            rejected == REPLAYS,
            format!("{rejected}/{REPLAYS} stale writes rejected"),
        );
    }

    if wanted(Suite::Reuse) {
        let rep = run_reuse_churn(50_000, 2, a.seed);
        report(
            "reuse",
            rep.violations == 0 && rep.write_site_violations == 0,
            format!(
                "{} reuses, {} lifetime violations, {} write-site violations",
                rep.reuses, rep.violations, rep.write_site_violations
            ),
        );
    }

    if wanted(Suite::Rollback) {
        let rep = run_forced_rollbacks(200, a.seed);
        report(
            "rollback",
            rep.census_ok && rep.violations == 0,
            format!(
                "{} rollbacks over {} ops, census_ok={}, {} violations",
                rep.rollbacks, rep.ops, rep.census_ok, rep.violations
            ),
        );
    }

    Ok(all_ok)
}
