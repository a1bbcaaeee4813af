use std::sync::Arc;

use construe::fixtures;
use construe::interp::{Problem, ProblemOptions};
use construe::model::Observation;
use construe::oracle;
use construe::procedures::Registry;
use construe::reasoning::descendants;
use construe::search::{self, construe_observed, SearchConfig};
use construe::validate::{validate, validate_final};
use proptest::prelude::*;

/// Beats with the given kinds and gaps, starting at 400 ms.
fn beats(kinds: &[bool], gaps: &[i64]) -> Problem {
    let mut t = 400;
    let obs = kinds
        .iter()
        .enumerate()
        .map(|(i, &normal)| {
            if i > 0 {
                t += gaps[i - 1];
            }
            Observation::instant(&format!("b{i}"), if normal { "Nb" } else { "Vb" }, t)
        })
        .collect();
    Problem::new(
        fixtures::rhythm_kb(),
        Arc::new(Registry::with_builtins()),
        obs,
        ProblemOptions::default(),
    )
    .unwrap()
}

fn beat_problem() -> impl Strategy<Value = Problem> {
    (2usize..7)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(
                    prop::sample::select(vec![300i64, 400, 700, 800, 900, 1200]),
                    n - 1,
                ),
            )
        })
        .prop_map(|(k, g)| beats(&k, &g))
}

fn small() -> SearchConfig {
    SearchConfig {
        max_nodes: 5000,
        ..SearchConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn parents_are_untouched_by_expansion(p in beat_problem()) {
        let mut changed = Vec::new();
        construe_observed(&p, &small(), &mut |id, i| {
            let before = i.clone();
            let json = serde_json::to_string(i).unwrap();
            let _ = descendants(&p, i);
            if *i != before || serde_json::to_string(i).unwrap() != json {
                changed.push(id);
            }
        });
        prop_assert!(changed.is_empty(), "{:?}", changed);
    }

    #[test]
    fn every_generated_interpretation_is_valid(p in beat_problem()) {
        let mut bad = Vec::new();
        let r = construe_observed(&p, &small(), &mut |id, i| {
            for v in validate(&p, i) {
                bad.push(format!("I{id}: {v}"));
            }
        });
        prop_assert!(bad.is_empty(), "{:?}", bad);
        if r.best.well_formed() {
            prop_assert!(validate_final(&p, &r.best).is_empty());
        }
    }

    #[test]
    fn runs_are_deterministic_and_replayable(p in beat_problem()) {
        let a = search::construe(&p, &small());
        let b = search::construe(&p, &small());
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(&a.best, &b.best);
        let states = search::replay(&p, &a.path()).unwrap();
        prop_assert_eq!(states.last().unwrap(), &a.best);
    }

    #[test]
    fn finds_a_cover_when_the_oracle_does(p in beat_problem()) {
        let r = search::construe(&p, &small());
        let n = p.observations.len();
        let sol = oracle::brute_force_solution(&p, n, n).unwrap();
        if !r.truncated {
            prop_assert_eq!(sol.minimum_size.is_some(), r.best.covering_ratio(&p) == 1.0);
        }
        if let (Some(k), true) = (sol.minimum_size, r.goal) {
            prop_assert!(r.best.hypotheses.len() >= k);
        }
    }
}

#[test]
fn zero_k_returns_the_initial_interpretation() {
    let p = fixtures::bigeminy();
    let r = search::construe(
        &p,
        &SearchConfig {
            k: Some(0),
            ..SearchConfig::default()
        },
    );
    assert!(r.best.hypotheses.is_empty());
    assert_eq!(r.trace.nodes.len(), 1);
}

#[test]
fn budget_truncates() {
    let p = fixtures::ignorance();
    let r = search::construe(
        &p,
        &SearchConfig {
            max_nodes: 200,
            ..SearchConfig::default()
        },
    );
    assert!(r.truncated && !r.goal);
    assert!(r.stats.generated <= 200);
    assert!(validate(&p, &r.best).is_empty());
}
