use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use broom::harness::verify::{run_suite, Fault, Suite, VerifyConfig};
use broom::harness::{measure_full, run_game, summarize, AdversaryKind, AmqKind, GameConfig, GameError, KeyStream, Oracle};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Experiments with the broom filter and its baselines.
///
/// Filters: broom, broom-reference, bloom, quotient, whitelist-bloom.
/// Adversaries: oblivious, repeat-fp, delete-reinsert.
/// Exit status: 0 on success, 1 when a check fails, 2 on a usage error.
#[derive(Parser, Debug)]
#[command(name = "broom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Play the adaptivity game and write per-round statistics.
    Simulate(SimulateArgs),
    /// Run the self-check suites; exits 1 if any fails.
    Verify(VerifyArgs),
    /// Measure throughput of each operation.
    Bench(BenchArgs),
    /// Fill a filter to capacity and report its local space.
    Space(SpaceArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Capacity; a power of two from 16 to 2^30.
    #[arg(long, default_value_t = 16384)]
    n: u64,
    /// The false-positive rate is 2^-eps_log2.
    #[arg(long, default_value_t = 6)]
    eps_log2: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "broom", value_parser = parse_amq)]
    amq: AmqKind,
    #[arg(long, default_value = "oblivious", value_parser = parse_adversary)]
    adversary: AdversaryKind,
    /// Rounds; for delete-reinsert, loop iterations.
    #[arg(long, default_value_t = 10)]
    rounds: u32,
    /// Write the full transcript instead of the summary (JSON only).
    #[arg(long)]
    transcript: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suites to run (repeatable); all if omitted.
    #[arg(long = "suite", value_parser = parse_suite)]
    suites: Vec<Suite>,
    /// Operations (or randomized cases) per suite.
    #[arg(long, default_value_t = 20_000)]
    ops: u64,
    #[arg(long, default_value_t = 256)]
    n: u64,
    #[arg(long, default_value_t = 6)]
    eps_log2: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Deliberately break the build under test.
    #[arg(long, value_parser = parse_fault, hide = true)]
    inject_fault: Option<Fault>,
    /// Also write the results as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "broom", value_parser = parse_amq)]
    amq: AmqKind,
    /// Negative lookups timed.
    #[arg(long, default_value_t = 1_000_000)]
    queries: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(long, default_value = "broom", value_parser = parse_amq)]
    amq: AmqKind,
    #[command(flatten)]
    common: Common,
}

fn parse_amq(s: &str) -> Result<AmqKind, String> {
    s.parse().map_err(|e: GameError| e.to_string())
}

fn parse_adversary(s: &str) -> Result<AdversaryKind, String> {
    s.parse().map_err(|e: GameError| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    match s {
        "drop-inserts" => Ok(Fault::DropInserts),
        _ => Err(format!("unknown fault {s:?}")),
    }
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Filter(broom::FilterError::Params(p)) => Failure::Usage(p.to_string()),
            GameError::Filter(broom::FilterError::Unsupported(_)) => Failure::Usage(e.to_string()),
            GameError::UnknownAmq(_) | GameError::UnknownAdversary(_) => Failure::Usage(e.to_string()),
            e => Failure::Check(e.to_string()),
        }
    }
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Failure::Check(e.to_string())),
    }
}

fn table<T: Serialize>(rows: &[T], format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(rows).expect("rows serialize") + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = GameConfig {
        amq: a.amq,
        adversary: a.adversary,
        n: a.common.n,
        eps_log2: a.common.eps_log2,
        seed: a.common.seed,
        rounds: a.rounds,
    };
    let t = run_game(&cfg)?;
    let body = if a.transcript {
        t.to_json() + "\n"
    } else {
        let s = summarize(&t);
        match a.common.format {
            Format::Json => s.to_json() + "\n",
            Format::Csv => s.to_csv(),
        }
    };
    emit(&a.common.out, &body)
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let cfg = VerifyConfig {
        n: a.n,
        eps_log2: a.eps_log2,
        seed: a.seed,
        ops: a.ops,
        fault: a.inject_fault,
    };
    broom::Params::from_log2(cfg.n, cfg.eps_log2).map_err(|e| Failure::Usage(e.to_string()))?;
    let suites = if a.suites.is_empty() { Suite::ALL.to_vec() } else { a.suites };
    let results: Vec<_> = suites.iter().map(|&s| run_suite(s, &cfg)).collect();
    for r in &results {
        println!("{} {} ({} checks): {}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.checks, r.detail);
    }
    if let Some(path) = &a.out {
        emit(&Some(path.clone()), &(serde_json::to_string_pretty(&results).expect("results serialize") + "\n"))?;
    }
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        k => Err(Failure::Check(format!("{k} suite(s) failed"))),
    }
}

#[derive(Serialize)]
struct BenchRow {
    operation: &'static str,
    ops: u64,
    seconds: f64,
    ops_per_sec: f64,
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let c = &a.common;
    let mut oracle = Oracle::new(a.amq.build(c.n, c.eps_log2, c.seed).map_err(GameError::from)?);
    let mut keys = KeyStream::new(c.seed);
    let mut rows = Vec::new();
    let mut time = |operation, ops, f: &mut dyn FnMut() -> Result<(), GameError>| -> Result<(), Failure> {
        let start = Instant::now();
        f()?;
        let seconds = start.elapsed().as_secs_f64();
        rows.push(BenchRow {
            operation,
            ops,
            seconds,
            ops_per_sec: ops as f64 / seconds.max(1e-9),
        });
        Ok(())
    };
    let members: Vec<u64> = {
        let mut v = Vec::with_capacity(c.n as usize);
        let mut seen = std::collections::HashSet::new();
        while (v.len() as u64) < c.n {
            let k = keys.member();
            if seen.insert(k) {
                v.push(k);
            }
        }
        v
    };
    time("insert", c.n, &mut || members.iter().try_for_each(|&k| oracle.insert(k)))?;
    time("lookup_member", c.n, &mut || {
        members.iter().try_for_each(|&k| oracle.lookup(k).map(drop))
    })?;
    time("lookup_negative", a.queries, &mut || {
        (0..a.queries).try_for_each(|_| oracle.lookup(keys.negative()).map(drop))
    })?;
    if oracle.amq().supports_delete() {
        time("delete", c.n, &mut || members.iter().try_for_each(|&k| oracle.delete(k)))?;
    }
    emit(&c.out, &table(&rows, c.format))
}

fn space(a: SpaceArgs) -> Result<(), Failure> {
    let c = &a.common;
    let check = measure_full(a.amq, c.n, c.eps_log2, c.seed)?;
    let body = match c.format {
        Format::Json => serde_json::to_string_pretty(&check).expect("space check serializes") + "\n",
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                component: &'static str,
                bits: f64,
            }
            let mut rows = vec![Row { component: "total", bits: check.total_bits as f64 }];
            if let Some(r) = &check.report {
                for (component, bits) in [
                    ("slots", r.slot_bits),
                    ("metadata", r.metadata_bits),
                    ("groups", r.group_bits),
                    ("spill", r.spill_bits),
                    ("secondary", r.secondary_bits),
                    ("backyard", r.backyard_bits),
                    ("adaptivity_content", r.adaptivity_bits),
                ] {
                    rows.push(Row { component, bits: bits as f64 });
                }
            }
            if let Some(b) = check.bound_bits {
                rows.push(Row { component: "bound", bits: b });
            }
            rows.push(Row { component: "per_element", bits: check.bits_per_element });
            rows.push(Row { component: "information_bound_per_element", bits: check.information_bound });
            table(&rows, Format::Csv)
        }
    };
    emit(&c.out, &body)?;
    match check.within_bound {
        Some(false) => Err(Failure::Check("local space exceeds the bound".into())),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
        Command::Space(a) => space(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
