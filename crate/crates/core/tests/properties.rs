use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;

use cesplit_core::algebra::{before, before_then, entered_before, is_split, ComputablePair};
use cesplit_core::harness::{replay_check, split_check};
use cesplit_core::hk::{self, Listing};
use cesplit_core::kernel::{write_events_jsonl, Corpus, EVENS_PROGRAM, ODDS_PROGRAM};
use cesplit_core::trace::{Header, Trace};
use cesplit_core::tree::{check::check_trace, diagonalize, Base, Procedure};
use cesplit_core::{friedberg, witness, EnumerationEvent, EventLog, Index, Kernel};

/// A log over sets 0..4 and elements 0..12 with gaps between events.
fn synthetic_log() -> impl Strategy<Value = EventLog> {
    prop::collection::vec((0u64..4, 0u64..12, 1u64..4), 0..60).prop_map(|raw| {
        let mut seen = HashSet::new();
        let mut s = 0;
        let evs: Vec<_> = raw
            .into_iter()
            .filter(|&(e, x, _)| seen.insert((e, x)))
            .map(|(e, x, gap)| {
                s += gap;
                EnumerationEvent { s, e: Index(e), x }
            })
            .collect();
        EventLog::from_events(evs, s + 1)
    })
}

fn machine(k: &Kernel, program: usize) -> Index {
    k.program_index(program)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_decompose(log in synthetic_log(), a in 0u64..4, b in 0u64..4, s in 0u64..200) {
        let (a, b) = (Index(a), Index(b));
        let bt = before_then(&log, a, b, s);
        let bf = before(&log, a, b, s);
        let ws = log.w_at(a, s);
        prop_assert!(bt.is_subset(&bf) && bf.is_subset(&ws));
        let minus: BTreeSet<u64> = ws.difference(&log.w_at(b, s)).copied().collect();
        prop_assert!(minus.is_disjoint(&bt));
        prop_assert_eq!(minus.union(&bt).copied().collect::<BTreeSet<_>>(), bf.clone());
        for x in 0..12 {
            prop_assert_eq!(entered_before(&log, a, b, x, s), bf.contains(&x));
        }
    }

    #[test]
    fn before_is_monotone_in_stage(log in synthetic_log(), a in 0u64..4, b in 0u64..4, s in 0u64..200) {
        let (a, b) = (Index(a), Index(b));
        prop_assert!(before_then(&log, a, b, s).is_subset(&before_then(&log, a, b, s + 1)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kernel_is_deterministic(len in 8usize..64, stages in 0u64..20_000) {
        let run = || {
            let mut k = Kernel::new(Corpus::standard(len));
            k.run_through(stages).unwrap();
            let mut out = Vec::new();
            write_events_jsonl(k.log().events(), &mut out).unwrap();
            (out, k.log().events().to_vec())
        };
        let (a, evs) = run();
        prop_assert_eq!(&a, &run().0);
        prop_assert!(evs.windows(2).all(|w| w[0].s < w[1].s));
        prop_assert!(evs.iter().all(|e| e.s <= stages));
    }

    #[test]
    fn friedberg_splits_and_replays(p in 0usize..40, stages in 0u64..20_000) {
        let mut k = Kernel::new(Corpus::standard(64));
        let a = machine(&k, p);
        let h = friedberg::run(&mut k, a, stages).unwrap();
        prop_assert!(split_check(k.log(), a, [h.a0, h.a1], stages).ok());
        let t = Trace::assemble(Header::Friedberg { a, a0: h.a0, a1: h.a1, stages }, k.log(), h.trace_records());
        prop_assert!(replay_check(&t).ok());
    }

    #[test]
    fn hk_halves_partition_part_of_b(pb in 0usize..40, pa in 0usize..40, stages in 0u64..20_000) {
        let mut k = Kernel::new(Corpus::standard(64));
        let (b, a) = (machine(&k, pb), machine(&k, pa));
        let h = hk::run(&mut k, b, a, Listing::canonical(), Listing::canonical(), stages).unwrap();
        let log = k.log();
        let (h0, h1) = (log.w_at(h.b0, stages), log.w_at(h.b1, stages));
        prop_assert!(h0.is_disjoint(&h1));
        let whole = log.w_at(b, stages);
        prop_assert!(h0.union(&h1).all(|x| whole.contains(x)));
        let t = Trace::assemble(Header::Hk { b, a, b0: h.b0, b1: h.b1, stages, y: vec![], z: vec![] }, log, h.trace_records());
        prop_assert!(replay_check(&t).ok());
    }

    #[test]
    fn shavrukov_sides_are_disjoint(w in 0usize..40, y in 0usize..40, stages in 0u64..20_000) {
        let mut k = Kernel::new(Corpus::standard(64));
        let (w, y) = (machine(&k, w), machine(&k, y));
        let (x0, x1) = witness::shavrukov_pair(&mut k, w, y);
        k.run_through(stages).unwrap();
        prop_assert!(k.log().w_at(x0, stages).is_disjoint(&k.log().w_at(x1, stages)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn tree_runs_are_clean(base in prop::sample::select(vec![Base::Hf, Base::Trivial, Base::Broken]), stages in 0u64..3_000) {
        let mut k = Kernel::new(Corpus::standard(64));
        let d = diagonalize(&mut k, &Procedure::new(base), stages, 9).unwrap();
        let t = Trace::assemble(d.handle.header(stages), k.log(), d.trace_records());
        prop_assert_eq!(check_trace(&t).violations.total(), 0);
        prop_assert!(replay_check(&t).ok());
    }
}

#[test]
fn witness_halves_split_a() {
    let mut k = Kernel::new(Corpus::standard(64));
    let r = ComputablePair { pos: k.program_index(EVENS_PROGRAM), neg: k.program_index(ODDS_PROGRAM) };
    let w = witness::build_31_witness(&mut k, r, 20_000).unwrap();
    assert!(is_split(k.log(), w.a, w.k_r, w.k_rbar, 20_000).is_ok());
    assert!(k.log().w_at(w.k_r, 20_000).iter().all(|x| x % 2 == 0));
    assert!(k.log().w_at(w.k_rbar, 20_000).iter().all(|x| x % 2 == 1));
}
