//! End-to-end acceptance checks, one line per criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cesplit_core::algebra::{before, before_then, ComputablePair};
use cesplit_core::harness::{iterate_corollary, probe_friedberg, probe_trivial_split, replay_check, split_check};
use cesplit_core::hk::Listing;
use cesplit_core::kernel::{canonical, write_events_jsonl, Corpus, ALL_PROGRAM, EVENS_PROGRAM, ODDS_PROGRAM};
use cesplit_core::trace::{Header, Record, Trace};
use cesplit_core::tree::{check::check_trace, diagonalize, Base, Procedure};
use cesplit_core::{friedberg, hk, witness, Index, Kernel};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Later corpus programs rarely halt within a desk-scale run.
const ACTIVE: usize = 40;

fn machine(k: &Kernel, program: usize, pad: u64) -> Index {
    Index(2 * (pad * k.corpus().len() as u64 + program as u64))
}

fn c1() -> Outcome {
    const S: u64 = 1_000_000;
    let run = || -> Result<(Vec<u8>, f64), String> {
        let start = Instant::now();
        let mut k = Kernel::new(Corpus::standard(512));
        let all = k.program_index(ALL_PROGRAM);
        friedberg::attach(&mut k, all);
        let r = ComputablePair { pos: k.program_index(EVENS_PROGRAM), neg: k.program_index(ODDS_PROGRAM) };
        witness::attach_31_witness(&mut k, r);
        k.run_through(S).map_err(|e| e.to_string())?;
        let evs = k.log().events();
        ensure(evs.windows(2).all(|w| w[0].s < w[1].s), || "two events share a stage".into())?;
        let mut bytes = Vec::new();
        write_events_jsonl(evs, &mut bytes).map_err(|e| e.to_string())?;
        Ok((bytes, start.elapsed().as_secs_f64()))
    };
    let (a, ta) = run()?;
    let (b, tb) = run()?;
    ensure(a == b, || "logs differ between runs".into())?;
    ensure(ta < 60.0 && tb < 60.0, || format!("runs took {ta:.1}s and {tb:.1}s"))?;
    Ok(format!("{} log bytes identical, {ta:.1}s per run", a.len()))
}

fn c2() -> Outcome {
    const S: u64 = 10_000;
    let mut k = Kernel::new(Corpus::standard(512));
    k.run_through(S).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0u64;
    for _ in 0..100 {
        let w = machine(&k, rng.gen_range(0..ACTIVE), rng.gen_range(0..2));
        let a = machine(&k, rng.gen_range(0..ACTIVE), rng.gen_range(0..2));
        let log = k.log();
        // The sets only change at their own event stages.
        let mut stages: BTreeSet<u64> = log.enumeration(w).iter().chain(log.enumeration(a)).map(|&(t, _)| t).collect();
        stages.insert(0);
        stages.insert(S);
        for &s in &stages {
            let (bt, bf, ws) = (before_then(log, w, a, s), before(log, w, a, s), log.w_at(w, s));
            ensure(bt.is_subset(&bf) && bf.is_subset(&ws), || format!("{w:?},{a:?} at {s}: containment fails"))?;
            let minus: BTreeSet<u64> = ws.difference(&log.w_at(a, s)).copied().collect();
            ensure(minus.is_disjoint(&bt), || format!("{w:?},{a:?} at {s}: W-A meets W↘A"))?;
            let union: BTreeSet<u64> = minus.union(&bt).copied().collect();
            ensure(union == bf, || format!("{w:?},{a:?} at {s}: W\\A ≠ (W-A) ⊔ (W↘A)"))?;
            checked += 1;
        }
    }
    Ok(format!("100 pairs, {checked} change stages, no violations"))
}

fn c3() -> Outcome {
    const S: u64 = 100_000;
    let mut echoes = 0;
    for p in 1..=20 {
        let mut k = Kernel::new(Corpus::standard(512));
        let a = k.program_index(p);
        let h = friedberg::run(&mut k, a, S).map_err(|e| e.to_string())?;
        let log = k.log();
        let split = split_check(log, a, [h.a0, h.a1], S);
        ensure(split.ok(), || format!("program {p}: {split:?}"))?;
        let t = Trace::assemble(Header::Friedberg { a, a0: h.a0, a1: h.a1, stages: S }, log, h.trace_records());
        let rep = replay_check(&t);
        ensure(rep.ok(), || format!("program {p}: {} routing divergences", rep.divergences.len()))?;
        let es: BTreeSet<Index> = (0..64).map(|e| canonical(Index(e))).collect();
        for e in es {
            if before_then(log, e, a, S).len() >= 10 {
                ensure(h.counter(e, 0) >= 1 && h.counter(e, 1) >= 1, || format!("program {p}, W_{}: a side counter is 0", e.0))?;
                echoes += 1;
            }
        }
    }
    Ok(format!("20 inputs split and replayed cleanly; {echoes} requirement echoes met"))
}

fn c4() -> Outcome {
    const S: u64 = 100_000;
    let mut k = Kernel::new(Corpus::standard(512));
    let (b, a) = (k.program_index(ALL_PROGRAM), k.program_index(EVENS_PROGRAM));
    let h = hk::run(&mut k, b, a, Listing::canonical(), Listing::canonical(), S).map_err(|e| e.to_string())?;
    let records = h.trace_records();
    let mut r: BTreeMap<u64, u64> = BTreeMap::new();
    for rec in &records {
        if let Record::Restraint { code, r: new, .. } = *rec {
            ensure(new > r.get(&code).copied().unwrap_or(code), || format!("r at code {code} fell to {new}"))?;
            r.insert(code, new);
        }
    }
    let t = Trace::assemble(Header::Hk { b, a, b0: h.b0, b1: h.b1, stages: S, y: vec![], z: vec![] }, k.log(), records);
    let rep = replay_check(&t);
    ensure(rep.ok(), || format!("{} divergences", rep.divergences.len()))?;

    // B ⊆ A, with Y_0 = ℕ and Z_0 = B - A = ∅ in the listing.
    let mut k = Kernel::new(Corpus::standard(512));
    let b = k.program_index(ALL_PROGRAM);
    let y = Listing::canonical().with(0, b);
    let z = Listing::canonical().with(0, k.empty_index());
    let h = hk::run(&mut k, b, b, y.clone(), z.clone(), S).map_err(|e| e.to_string())?;
    let log = k.log();
    let late = [h.b0, h.b1].map(|i| log.size_at(i, S) - log.size_at(i, S - S / 5));
    ensure(late.contains(&0), || format!("both sides grew late: {late:?}"))?;
    let header = Header::Hk { b, a: b, b0: h.b0, b1: h.b1, stages: S, y: y.pairs(), z: z.pairs() };
    let rigged = replay_check(&Trace::assemble(header, log, h.trace_records()));
    ensure(rigged.ok(), || format!("rigged run: {} divergences", rigged.divergences.len()))?;
    Ok(format!("{} restraint changes monotone, replay clean; B ⊆ A late growth per side {late:?}", r.len()))
}

fn c5() -> Outcome {
    const S: u64 = 100_000;
    let mut k = Kernel::new(Corpus::standard(512));
    let r = ComputablePair { pos: k.program_index(EVENS_PROGRAM), neg: k.program_index(ODDS_PROGRAM) };
    let w = witness::build_31_witness(&mut k, r, S).map_err(|e| e.to_string())?;
    let log = k.log();
    let ev = probe_friedberg(log, w.a, w.k_r, w.k_rbar, S, 64);
    let row = &ev.rows[r.pos.0 as usize];
    ensure(row.stalled.contains(&1), || format!("no signature at W_{} = R: {row:?}", r.pos.0))?;
    for half in [w.k_r, w.k_rbar] {
        let t = probe_trivial_split(log, half, S, 64);
        ensure(t.all_refuted(), || format!("half {half:?} has a live complement candidate"))?;
    }
    Ok(format!(
        "signature at W_{} = R: W ↘ A grew {} -> {} while W ↘ K_R̄ held at {}; 64/64 complements refuted for both halves",
        r.pos.0, row.early[0], row.now[0], row.now[2]
    ))
}

fn c6() -> Outcome {
    const S: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut covered = 0usize;
    for _ in 0..100 {
        let mut k = Kernel::new(Corpus::standard(512));
        let (w, y, a) = (machine(&k, rng.gen_range(0..ACTIVE), 0), machine(&k, rng.gen_range(0..ACTIVE), 0), machine(&k, rng.gen_range(0..ACTIVE), 0));
        let (x0, x1) = witness::shavrukov_pair(&mut k, w, y);
        let (a0, a1) = witness::shav_split(&mut k, a, x0, x1);
        k.run_through(S).map_err(|e| e.to_string())?;
        let log = k.log();
        let (s0, s1) = (log.w_at(x0, S), log.w_at(x1, S));
        ensure(s0.is_disjoint(&s1), || format!("X_0 and X_1 meet for {w:?},{y:?}"))?;
        let (h0, h1) = (log.w_at(a0, S), log.w_at(a1, S));
        let whole = log.w_at(a, S);
        // A half element may only appear once it is in A and on its side.
        for (half, side) in [(a0, x0), (a1, x1)] {
            for &(t, x) in log.enumeration(half) {
                let ok = [a, side].iter().all(|&i| log.entry_stage(i, x).is_some_and(|u| u < t));
                ensure(ok, || format!("{x} entered {half:?} at {t} ahead of A ∩ X"))?;
            }
        }
        // Everything whose side was known a little earlier has been routed.
        let settled = S - 64;
        for &x in &whole {
            let known = [x0, x1].iter().filter_map(|&i| log.entry_stage(i, x)).min().map(|t| t.max(log.entry_stage(a, x).unwrap_or(0)));
            if known.is_some_and(|t| t <= settled) {
                ensure(h0.contains(&x) || h1.contains(&x), || format!("{x} is covered but unrouted"))?;
                covered += 1;
            }
        }
    }
    Ok(format!("100 pairs disjoint; {covered} covered elements routed exactly"))
}

fn c7() -> Outcome {
    const S: u64 = 1_000_000;
    let runs: Vec<(Base, Result<(u8, bool, u64), String>)> = std::thread::scope(|sc| {
        let hs: Vec<_> = [Base::Hf, Base::Trivial, Base::Broken]
            .into_iter()
            .map(|b| {
                (
                    b,
                    sc.spawn(move || {
                        let mut k = Kernel::new(Corpus::standard(512));
                        let d = diagonalize(&mut k, &Procedure::new(b), S, 25).map_err(|e| e.to_string())?;
                        let t = Trace::assemble(d.handle.header(S), k.log(), d.trace_records());
                        let rep = check_trace(&t);
                        Ok((d.verdict().case, d.stable(), rep.violations.total()))
                    }),
                )
            })
            .collect();
        hs.into_iter().map(|(b, h)| (b, h.join().expect("run panicked"))).collect()
    });
    let mut line = Vec::new();
    for (b, r) in runs {
        let (case, stable, violations) = r?;
        let want: &[u8] = match b {
            Base::Hf => &[3],
            Base::Trivial => &[1, 2],
            Base::Broken => &[1],
        };
        ensure(violations == 0, || format!("{b:?}: {violations} invariant violations"))?;
        ensure(want.contains(&case) && stable, || format!("{b:?}: verdict {case}, stable {stable}"))?;
        line.push(format!("{b:?}→{case}"));
    }
    Ok(format!("zero violations, stable verdicts {}", line.join(" ")))
}

fn c8() -> Outcome {
    let start = Instant::now();
    let mut k = Kernel::new(Corpus::standard(512));
    let rounds = iterate_corollary(&mut k, &Procedure::new(Base::Hf), 3, 1_000_000, 25).map_err(|e| e.to_string())?;
    let idx: BTreeSet<Index> = rounds.iter().map(|r| r.index).collect();
    ensure(rounds.len() == 3 && idx.len() == 3, || format!("indices {idx:?}"))?;
    ensure(rounds.iter().all(|r| r.verdict.case == 3), || format!("verdicts {:?}", rounds.iter().map(|r| r.verdict.case).collect::<Vec<_>>()))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    Ok(format!("indices {:?}, all verdict 3, {secs:.1}s", idx.iter().map(|i| i.0).collect::<Vec<_>>()))
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cesplit")).args(args).output().expect("run cesplit");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Rewrites the first line whose record matches `pick` with `edit`.
fn tamper(src: &Path, dst: &Path, pick: impl Fn(&Value) -> bool, edit: impl Fn(&mut Value)) -> Result<(), String> {
    let text = std::fs::read_to_string(src).map_err(|e| e.to_string())?;
    let mut done = false;
    let lines: Vec<String> = text
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).expect("json line");
            if !done && pick(&v) {
                done = true;
                edit(&mut v);
                return v.to_string();
            }
            l.to_string()
        })
        .collect();
    ensure(done, || format!("no line to tamper in {}", src.display()))?;
    std::fs::write(dst, lines.join("\n") + "\n").map_err(|e| e.to_string())
}

fn op(v: &Value, name: &str) -> bool {
    v["op"] == name
}

fn bump(v: &mut Value, field: &str) {
    v[field] = Value::from(v[field].as_u64().expect("number") + 1);
}

fn flip(node: &str) -> String {
    match node.strip_suffix('0') {
        Some(p) => format!("{p}1"),
        None => format!("{}0", node.strip_suffix('1').unwrap_or(node)),
    }
}

fn c9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n);
    let (f, h, t) = (p("f.jsonl"), p("h.jsonl"), p("t.jsonl"));
    let s = |x: &Path| x.to_str().expect("utf8 path").to_string();
    for args in [
        vec!["split", "friedberg", "--index", "2", "--stages", "3000", "--trace", &s(&f)],
        vec!["split", "hk", "--index", "2", "--a-index", "4", "--stages", "3000", "--trace", &s(&h)],
        vec!["diagonalize", "--proc", "hf", "--stages", "3000", "--depth", "16", "--trace", &s(&t)],
    ] {
        let (code, _) = cli(&args);
        ensure(code == 0, || format!("{args:?} exited {code}"))?;
    }
    for x in [&f, &h, &t] {
        let (code, out) = cli(&["verify", "--trace", &s(x), "--suite", "replay"]);
        ensure(code == 0, || format!("clean {} exited {code}: {out}", x.display()))?;
    }
    let half0 = |path: &Path, key: &str| -> u64 {
        let head: Value = serde_json::from_str(std::fs::read_to_string(path).unwrap().lines().next().unwrap()).unwrap();
        head[key].as_u64().unwrap()
    };
    let (fa0, hb) = (half0(&f, "a0"), [half0(&h, "b0"), half0(&h, "b1")]);
    type Pick = Box<dyn Fn(&Value) -> bool>;
    type Edit = Box<dyn Fn(&mut Value)>;
    let cases: Vec<(&str, &Path, Pick, Edit)> = vec![
        ("route side", &f, Box::new(|v| op(v, "route")), Box::new(|v| v["side"] = Value::from(1 - v["side"].as_u64().unwrap()))),
        ("route ball", &f, Box::new(|v| op(v, "route")), Box::new(|v| bump(v, "x"))),
        ("half event", &f, Box::new(move |v| op(v, "event") && v["e"] == fa0), Box::new(|v| v["x"] = Value::from(v["x"].as_u64().unwrap() + 100_000))),
        ("hk restraint", &h, Box::new(|v| op(v, "restraint")), Box::new(|v| bump(v, "r"))),
        ("hk side", &h, Box::new(|v| op(v, "hk")), Box::new(|v| v["side"] = Value::from(1 - v["side"].as_u64().unwrap()))),
        ("hk half event", &h, Box::new(move |v| op(v, "event") && hb.iter().any(|&b| v["e"] == b)), Box::new(|v| v["x"] = Value::from(v["x"].as_u64().unwrap() + 100_000))),
        ("tree path", &t, Box::new(|v| op(v, "f")), Box::new(|v| v["node"] = Value::from(flip(v["node"].as_str().unwrap())))),
        ("tree chip", &t, Box::new(|v| op(v, "chip")), Box::new(|v| bump(v, "count"))),
        ("tree pull", &t, Box::new(|v| op(v, "pull")), Box::new(|v| bump(v, "x1"))),
        ("tree verdict", &t, Box::new(|v| op(v, "verdict")), Box::new(|v| v["case"] = Value::from(v["case"].as_u64().unwrap() % 3 + 1))),
    ];
    let mut caught = 0;
    for (i, (name, src, pick, edit)) in cases.into_iter().enumerate() {
        let dst = p(&format!("tampered{i}.jsonl"));
        tamper(src, &dst, pick, edit)?;
        let (code, _) = cli(&["verify", "--trace", &s(&dst), "--suite", "replay"]);
        ensure(code == 1, || format!("{name}: verify exited {code}"))?;
        caught += 1;
    }
    Ok(format!("{caught}/10 tamperings caught with exit 1"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("single event per stage, deterministic log", c1),
        ("operator laws", c2),
        ("Friedberg construction", c3),
        ("Herrmann-Kummer construction", c4),
        ("non-Friedberg witness evidence", c5),
        ("Shavrukov operators", c6),
        ("tree diagonalizer", c7),
        ("corollary iteration", c8),
        ("fault injection", c9),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("C{}", i + 1);
        if !only.is_empty() && !only.iter().any(|o| o == &id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS [{secs:6.1}s] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL [{secs:6.1}s] {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
