mod common;

use construe::fixtures;
use construe::interp::{Problem, ProblemOptions};
use construe::model::Observation;
use construe::oracle;
use construe::procedures::Registry;
use proptest::prelude::*;
use std::sync::Arc;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_language_matches_regex(
        segs in prop::collection::vec((prop::sample::select(vec!['a', 'b', 'c']), any::<bool>()), 1..4),
        max in 1usize..6,
    ) {
        let (text, re) = common::segment_grammar(&segs);
        let kb = fixtures::kb(&[&text]);
        let got = common::generated_words(&kb, 0, max);
        let want = common::reference_words(&re, &["a", "b", "c"], max);
        prop_assert_eq!(got, want, "{}", text);
    }
}

#[test]
fn shipped_grammars_match_regex() {
    let kb = fixtures::rhythm_kb();
    for (g, re, alpha) in [
        ("G_VB", r"^Nb Vb (?:Nb Vb )+$", &["Nb", "Vb"][..]),
        ("G_N", r"^Pw QRS Tw $", &["Pw", "QRS", "Tw"][..]),
        ("G_Tw", r"^QRS wave $", &["QRS", "wave"][..]),
        ("G_SR", r"^QRS QRS (?:QRS )+$", &["QRS"][..]),
        ("G_RHY", r"^beat beat (?:beat )+$", &["beat"][..]),
        ("G_QRS", r"^wave $", &["wave"][..]),
        (
            "G_w",
            r"^sample sample (?:sample )+sample $",
            &["sample"][..],
        ),
    ] {
        let gi = kb.grammars.iter().position(|x| x.name == g).unwrap();
        for max in 0..=7 {
            assert_eq!(
                common::generated_words(&kb, gi, max),
                common::reference_words(re, alpha, max),
                "{g} up to {max}"
            );
        }
    }
}

#[test]
fn pattern_counts() {
    let kb = fixtures::rhythm_kb();
    let count = |g: &str, n| {
        let gi = kb.grammars.iter().position(|x| x.name == g).unwrap();
        construe::grammar::enumerate_states(&kb, gi, n).len()
    };
    assert_eq!(count("G_N", 10), 1);
    assert_eq!(count("G_VB", 6), 2);
    assert_eq!(count("G_VB", 0), 0);
}

/// Whether G_N accepts a cycle with these onsets and ends.
fn accepts(pw: (i64, i64), qrs: (i64, i64), tw: (i64, i64)) -> bool {
    let kb = fixtures::kb(&[construe::ecg::ECG_WAVES_KB]);
    let obs = vec![
        Observation::new("pw", "Pw", pw.0, pw.1),
        Observation::new("qrs", "QRS", qrs.0, qrs.1),
        Observation::new("tw", "Tw", tw.0, tw.1),
    ];
    let p = Problem::new(
        kb,
        Arc::new(Registry::with_builtins()),
        obs,
        ProblemOptions::default(),
    )
    .unwrap();
    oracle::candidates(&p, 3)
        .unwrap()
        .iter()
        .any(|c| c.grammar == "G_N" && c.abstracted.len() == 3)
}

#[test]
fn g_n_timing_windows_are_sharp() {
    // a cycle in the middle of every window
    let (pw, qrs, tw) = ((0, 80), (150, 250), (350, 550));
    assert!(accepts(pw, qrs, tw));
    type Probe = fn(i64) -> ((i64, i64), (i64, i64), (i64, i64));
    let probes: [(&str, i64, i64, Probe); 5] = [
        ("Pw duration", 50, 120, |d| ((0, d), (150, 250), (350, 550))),
        ("QRS duration", 50, 150, |d| {
            ((0, 80), (150, 150 + d), (350 + d - 100, 550))
        }),
        ("PR interval", 100, 210, |d| {
            ((0, 80), (d, d + 100), (d + 200, d + 400))
        }),
        ("QRS end to T onset", 80, 120, |d| {
            ((0, 80), (150, 250), (250 + d, 550))
        }),
        ("QRS onset to T end", 0, 520, |d| {
            ((0, 80), (150, 250), (350, 150 + d))
        }),
    ];
    for (name, lo, hi, make) in probes {
        let inside = [lo, hi];
        for d in inside {
            if name == "QRS onset to T end" && d == lo {
                continue;
            }
            let (a, b, c) = make(d);
            assert!(accepts(a, b, c), "{name} = {d} should be accepted");
        }
        for d in [lo - 1, hi + 1] {
            if name == "QRS onset to T end" && d == lo - 1 {
                continue;
            }
            let (a, b, c) = make(d);
            assert!(!accepts(a, b, c), "{name} = {d} should be rejected");
        }
    }
}
