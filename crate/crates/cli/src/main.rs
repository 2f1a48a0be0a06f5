use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cesplit_core::algebra::ComputablePair;
use cesplit_core::harness::{self, probe_friedberg, probe_trivial_split, replay_check, split_check};
use cesplit_core::hk::Listing;
use cesplit_core::kernel::{Corpus, EVENS_PROGRAM, ODDS_PROGRAM};
use cesplit_core::trace::{read_trace, write_trace, Header, Record, Trace};
use cesplit_core::tree::{check::check_trace, diagonalize, Base, Procedure};
use cesplit_core::{witness, Index, Kernel};

#[derive(Parser)]
#[command(name = "cesplit", version, about = "Finite-stage splitting constructions on c.e. sets")]
struct Cli {
    /// Programs in the standard machine corpus.
    #[arg(long, global = true, default_value_t = 512)]
    corpus: usize,
    /// Read the machine corpus from a file instead.
    #[arg(long, global = true)]
    corpus_file: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step the kernel and print `W_e` at the last stage.
    Enumerate {
        #[arg(long)]
        index: u64,
        #[arg(long)]
        stages: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Split a set with the Friedberg or Herrmann-Kummer construction.
    Split {
        #[arg(value_enum)]
        kind: SplitKind,
        #[arg(long)]
        index: u64,
        /// The set the HK split works relative to (default: empty).
        #[arg(long)]
        a_index: Option<u64>,
        #[arg(long)]
        stages: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build witness sets.
    Witness {
        #[command(subcommand)]
        kind: WitnessKind,
    },
    /// Diagonalize against a splitting procedure.
    Diagonalize {
        /// hf, trivial, broken, or plugin (with --plugin FILE). Repeat for several runs.
        #[arg(long = "proc", value_enum, required = true)]
        procs: Vec<ProcKind>,
        /// JSON procedure description for `--proc plugin`.
        #[arg(long)]
        plugin: Option<PathBuf>,
        #[arg(long)]
        stages: u64,
        #[arg(long, default_value_t = 25)]
        depth: u32,
        /// Trace path; with several procedures, `{}` is replaced by the procedure name.
        #[arg(long)]
        trace: Option<String>,
    },
    /// Check a recorded trace.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::Replay)]
        suite: Suite,
        /// Probe breadth for the friedberg suite.
        #[arg(long, default_value_t = 64)]
        probes: u64,
    },
    /// Diagonalize repeatedly, patching the procedure at each index produced.
    Iterate {
        #[arg(long)]
        rounds: usize,
        #[arg(long = "proc", value_enum, default_value_t = ProcKind::Hf)]
        proc_kind: ProcKind,
        #[arg(long)]
        plugin: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        stages: u64,
        #[arg(long, default_value_t = 25)]
        depth: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitKind {
    Friedberg,
    Hk,
}

#[derive(Subcommand)]
enum WitnessKind {
    /// A set with a non-trivial non-Friedberg split, over a computable set R.
    Build31 {
        #[command(flatten)]
        r: PairArgs,
        #[arg(long)]
        stages: u64,
        #[arg(long, default_value_t = 64)]
        probes: u64,
    },
    /// `X_0 = W \ Y`, `X_1 = Y \ W` and the split of A along them.
    Shav {
        #[arg(long)]
        w: u64,
        #[arg(long)]
        y: u64,
        #[arg(long)]
        a: u64,
        #[arg(long)]
        stages: u64,
    },
}

#[derive(Args)]
struct PairArgs {
    /// Index enumerating R (default: the evens).
    #[arg(long)]
    pos: Option<u64>,
    /// Index enumerating the complement of R (default: the odds).
    #[arg(long)]
    neg: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProcKind {
    Hf,
    Trivial,
    Broken,
    Plugin,
}

impl ProcKind {
    fn name(self) -> &'static str {
        match self {
            ProcKind::Hf => "hf",
            ProcKind::Trivial => "trivial",
            ProcKind::Broken => "broken",
            ProcKind::Plugin => "plugin",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Replay,
    Split,
    Friedberg,
    Tree,
}

/// Outcome of a command: a JSON report and whether an invariant failed.
struct Outcome {
    report: Value,
    violated: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            // A closed pipe downstream is not our failure.
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out.report).expect("json"));
            ExitCode::from(u8::from(out.violated))
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn corpus(cli: &Cli) -> Result<Corpus> {
    match &cli.corpus_file {
        Some(p) => Ok(Corpus::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)),
        None => Ok(Corpus::standard(cli.corpus)),
    }
}

fn save(path: &Path, header: &Header, kernel: &Kernel, decisions: &[Record]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_trace(&mut out, header, kernel.log().events(), decisions)?;
    out.flush()?;
    Ok(())
}

fn procedure(kind: ProcKind, plugin: Option<&Path>) -> Result<Procedure> {
    Ok(match kind {
        ProcKind::Hf => Procedure::new(Base::Hf),
        ProcKind::Trivial => Procedure::new(Base::Trivial),
        ProcKind::Broken => Procedure::new(Base::Broken),
        ProcKind::Plugin => {
            let Some(p) = plugin else { bail!("--proc plugin needs --plugin FILE") };
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
    })
}

fn run(cli: &Cli) -> Result<Outcome> {
    let corpus = corpus(cli)?;
    match &cli.command {
        Command::Enumerate { index, stages, trace } => {
            let mut k = Kernel::new(corpus);
            k.run_through(*stages)?;
            let set = k.w_at(Index(*index), *stages)?;
            if let Some(p) = trace {
                save(p, &Header::Enumerate { stages: *stages }, &k, &[])?;
            }
            Ok(Outcome { report: json!({ "index": index, "stages": stages, "events": k.log().events().len(), "set": set }), violated: false })
        }
        Command::Split { kind, index, a_index, stages, trace } => {
            let mut k = Kernel::new(corpus);
            let b = Index(*index);
            let (header, halves, decisions, whole) = match kind {
                SplitKind::Friedberg => {
                    let h = cesplit_core::friedberg::run(&mut k, b, *stages)?;
                    (Header::Friedberg { a: b, a0: h.a0, a1: h.a1, stages: *stages }, [h.a0, h.a1], h.trace_records(), b)
                }
                SplitKind::Hk => {
                    let a = a_index.map(Index).unwrap_or_else(|| k.empty_index());
                    let h = cesplit_core::hk::run(&mut k, b, a, Listing::canonical(), Listing::canonical(), *stages)?;
                    let header = Header::Hk { b, a, b0: h.b0, b1: h.b1, stages: *stages, y: Vec::new(), z: Vec::new() };
                    (header, [h.b0, h.b1], h.trace_records(), b)
                }
            };
            if let Some(p) = trace {
                save(p, &header, &k, &decisions)?;
            }
            let rep = split_check(k.log(), whole, halves, *stages);
            let sizes = halves.map(|i| k.log().size_at(i, *stages));
            Ok(Outcome {
                violated: !rep.ok(),
                report: json!({ "halves": halves, "sizes": sizes, "routed": decisions.len(), "split": rep }),
            })
        }
        Command::Witness { kind: WitnessKind::Build31 { r, stages, probes } } => {
            let mut k = Kernel::new(corpus);
            let pair = ComputablePair {
                pos: r.pos.map(Index).unwrap_or_else(|| k.program_index(EVENS_PROGRAM)),
                neg: r.neg.map(Index).unwrap_or_else(|| k.program_index(ODDS_PROGRAM)),
            };
            let bundle = witness::build_31_witness(&mut k, pair, *stages)?;
            let log = k.log();
            let split = split_check(log, bundle.a, [bundle.k_r, bundle.k_rbar], *stages);
            let fried = probe_friedberg(log, bundle.a, bundle.k_r, bundle.k_rbar, *stages, *probes);
            let trivial = [bundle.k_r, bundle.k_rbar].map(|h| probe_trivial_split(log, h, *stages, *probes).all_refuted());
            Ok(Outcome {
                violated: !split.ok(),
                report: json!({
                    "bundle": bundle,
                    "size": log.size_at(bundle.a, *stages),
                    "split": split,
                    "signatures": fried.signatures().collect::<Vec<_>>(),
                    "all_complements_refuted": trivial,
                }),
            })
        }
        Command::Witness { kind: WitnessKind::Shav { w, y, a, stages } } => {
            let mut k = Kernel::new(corpus);
            let (x0, x1) = witness::shavrukov_pair(&mut k, Index(*w), Index(*y));
            let (a0, a1) = witness::shav_split(&mut k, Index(*a), x0, x1);
            k.run_through(*stages)?;
            let log = k.log();
            let overlap = log.w_at(x0, *stages).intersection(&log.w_at(x1, *stages)).next().copied();
            let coverage = witness::check_coverage(log, Index(*a), x0, x1, *stages).err().map(|e| e.to_string());
            let split = split_check(log, Index(*a), [a0, a1], *stages);
            Ok(Outcome {
                violated: overlap.is_some() || !split.ok(),
                report: json!({ "x": [x0, x1], "halves": [a0, a1], "overlap": overlap, "coverage": coverage, "split": split }),
            })
        }
        Command::Diagonalize { procs, plugin, stages, depth, trace } => {
            if procs.len() > 1 && trace.as_deref().is_some_and(|t| !t.contains("{}")) {
                bail!("with several procedures the trace path needs a {{}} placeholder");
            }
            let jobs: Vec<(ProcKind, Procedure)> =
                procs.iter().map(|&p| procedure(p, plugin.as_deref()).map(|h| (p, h))).collect::<Result<_>>()?;
            let results = parallel(cli.jobs, &jobs, |(kind, h)| -> Result<Value> {
                let mut k = Kernel::new(corpus.clone());
                let d = diagonalize(&mut k, h, *stages, *depth)?;
                let header = d.handle.header(*stages);
                let records = d.trace_records();
                let check = check_trace(&Trace::assemble(header.clone(), k.log(), records.clone()));
                if let Some(t) = trace {
                    save(Path::new(&t.replace("{}", kind.name())), &header, &k, &records)?;
                }
                Ok(json!({
                    "proc": kind.name(),
                    "index": d.handle.a,
                    "halves": [d.handle.e0, d.handle.e1],
                    "size": k.log().size_at(d.handle.a, *stages),
                    "verdict": d.verdict(),
                    "stable": d.stable(),
                    "checkpoints": d.points,
                    "violations": check.violations,
                    "examples": check.examples,
                }))
            })?;
            let violated = results.iter().any(|r| r["violations"].as_object().is_some_and(|v| v.values().any(|n| n.as_u64() != Some(0))));
            Ok(Outcome { report: Value::Array(results), violated })
        }
        Command::Verify { trace, suite, probes } => {
            let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
            let t = match read_trace(BufReader::new(file)) {
                Ok(t) => t,
                Err(e) => return Ok(Outcome { report: json!({ "error": e.to_string() }), violated: true }),
            };
            verify(&t, *suite, *probes)
        }
        Command::Iterate { rounds, proc_kind, plugin, stages, depth } => {
            let h = procedure(*proc_kind, plugin.as_deref())?;
            let mut k = Kernel::new(corpus);
            let rounds = harness::iterate_corollary(&mut k, &h, *rounds, *stages, *depth)?;
            let mut seen = std::collections::BTreeSet::new();
            let distinct = rounds.iter().all(|r| seen.insert(r.index));
            Ok(Outcome { violated: !distinct, report: json!({ "distinct": distinct, "rounds": rounds }) })
        }
    }
}

fn verify(t: &Trace, suite: Suite, probes: u64) -> Result<Outcome> {
    let Some(header) = &t.header else {
        return Ok(Outcome { report: json!({ "error": "trace has no header" }), violated: true });
    };
    let log = t.log();
    let last = t.stepped.saturating_sub(1);
    let whole = match *header {
        Header::Enumerate { .. } => None,
        Header::Friedberg { a, a0, a1, .. } => Some((a, [a0, a1])),
        Header::Hk { b, b0, b1, .. } => Some((b, [b0, b1])),
        Header::Tree { a, e0, e1, .. } => Some((a, [e0, e1])),
    };
    Ok(match suite {
        Suite::Replay => {
            let rep = replay_check(t);
            Outcome { violated: !rep.ok(), report: serde_json::to_value(rep)? }
        }
        Suite::Split => match whole {
            Some((a, halves)) => {
                let rep = split_check(&log, a, halves, last);
                Outcome { violated: !rep.ok(), report: serde_json::to_value(rep)? }
            }
            None => Outcome { report: json!({ "skipped": "no split in an enumeration trace" }), violated: false },
        },
        Suite::Friedberg => match whole {
            Some((a, [a0, a1])) => {
                let fried = probe_friedberg(&log, a, a0, a1, last, probes);
                let trivial = [a0, a1].map(|h| probe_trivial_split(&log, h, last, probes));
                Outcome {
                    violated: false,
                    report: json!({
                        "signatures": fried.signatures().collect::<Vec<_>>(),
                        "window": fried.window,
                        "growth": fried.growth,
                        "all_complements_refuted": trivial.each_ref().map(|t| t.all_refuted()),
                    }),
                }
            }
            None => Outcome { report: json!({ "skipped": "no split in an enumeration trace" }), violated: false },
        },
        Suite::Tree => {
            if !matches!(header, Header::Tree { .. }) {
                bail!("the tree suite needs a diagonalize trace");
            }
            let rep = check_trace(t);
            Outcome { violated: !rep.ok(), report: serde_json::to_value(rep)? }
        }
    })
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn parallel<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    let chunk = items.len().div_ceil(jobs).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
