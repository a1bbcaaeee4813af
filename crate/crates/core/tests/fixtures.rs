use construe::fixtures;
use construe::interp::Problem;
use construe::oracle;
use construe::search::{construe_observed, SearchConfig};
use construe::validate::{validate, validate_final};

fn validated_run(
    p: &Problem,
    cfg: &SearchConfig,
) -> (usize, Vec<String>, construe::search::SearchResult) {
    let mut nodes = 0;
    let mut bad = Vec::new();
    let r = construe_observed(p, cfg, &mut |id, i| {
        nodes += 1;
        bad.extend(validate(p, i).into_iter().map(|v| format!("I{id}: {v}")));
    });
    (nodes, bad, r)
}

#[test]
fn every_node_of_every_fixture_is_valid() {
    for (name, p) in [
        ("sinus", fixtures::sinus()),
        ("worked example", fixtures::worked_example()),
        ("bigeminy", fixtures::bigeminy()),
        ("nine beats", fixtures::nine_beats()),
        ("brady", fixtures::brady()),
        ("missing beat", fixtures::missing_beat()),
    ] {
        let (nodes, bad, r) = validated_run(&p, &SearchConfig::default());
        assert!(nodes > 1, "{name}");
        assert!(bad.is_empty(), "{name}: {bad:?}");
        assert!(validate_final(&p, &r.best).is_empty(), "{name}");
    }
}

#[test]
fn ignorance_prefix_is_valid() {
    let p = fixtures::ignorance();
    let cfg = SearchConfig {
        max_nodes: 20_000,
        ..SearchConfig::default()
    };
    let (nodes, bad, _) = validated_run(&p, &cfg);
    assert_eq!(nodes, 20_000);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn oracle_agrees_on_rhythms() {
    for (p, q) in [
        (fixtures::bigeminy(), "VB"),
        (fixtures::nine_beats(), "RHY"),
    ] {
        let n = p.observations.len();
        let sol = oracle::brute_force_solution(&p, n, 2).unwrap();
        assert_eq!(sol.minimum_size, Some(1));
        let hyps: Vec<&str> = sol
            .minimum_covers
            .iter()
            .map(|c| sol.candidates[c[0]].hypothesis.as_str())
            .collect();
        assert_eq!(hyps, vec![q]);
    }
}

#[test]
fn reduction_matches_set_cover_on_small_families() {
    let cases: [(&[u32], Vec<Vec<u32>>, Option<usize>); 4] = [
        (&[1], vec![vec![1]], Some(1)),
        (&[1, 2, 3], vec![vec![1, 2], vec![2, 3], vec![3]], Some(2)),
        (&[1, 2, 3], vec![vec![1], vec![2]], None),
        (&[1, 2], vec![], None),
    ];
    for (u, s, want) in cases {
        assert_eq!(oracle::min_set_cover(u, &s), want);
        let p = oracle::phi_reduction(u, &s).unwrap();
        assert_eq!(
            oracle::brute_force_solution(&p, u.len(), s.len())
                .unwrap()
                .minimum_size,
            want
        );
    }
}

#[test]
fn bigeminy_never_skips_a_normal_beat() {
    use construe::interp::{ObsRef, RejectKind};
    let p = fixtures::bigeminy();
    let mut skipped = Vec::new();
    let r = construe_observed(&p, &SearchConfig::default(), &mut |id, i| {
        for h in &i.hypotheses {
            let normal: Vec<usize> = h
                .state
                .derivation()
                .iter()
                .filter(|&&f| h.finding(f).observable == "Nb")
                .filter_map(|f| match h.matching.get(f) {
                    Some(ObsRef::Initial(k)) => Some(*k),
                    _ => None,
                })
                .collect();
            if normal.windows(2).any(|w| w[1] != w[0] + 2) {
                skipped.push(id);
            }
        }
    });
    assert!(skipped.is_empty(), "{skipped:?}");
    assert!(r
        .trace
        .rejections
        .iter()
        .any(|x| x.rejection.cause.kind == RejectKind::Periodicity));
}
