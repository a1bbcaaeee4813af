mod common;

use construe::temporal::{TemporalNetwork, ORIGIN};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn minimal_network_matches_enumeration(seed in any::<u64>()) {
        let n = common::random_network(&mut StdRng::seed_from_u64(seed));
        let bad = common::stn_disagreements(&n);
        prop_assert!(bad.is_empty(), "{:?}: {:?}", n, bad);
    }

    #[test]
    fn adding_constraints_never_widens(seed in any::<u64>(), x in 0usize..5, y in 0usize..5, lo in -6i64..6, w in 0i64..5) {
        let n = common::random_network(&mut StdRng::seed_from_u64(seed));
        prop_assert!(common::monotone(&n, (x, y, lo, lo + w)));
    }

    #[test]
    fn restrict_is_idempotent(lo in -20i64..20, w in 0i64..20, lo2 in -20i64..20, w2 in 0i64..20) {
        let mut net = TemporalNetwork::new();
        let v = net.add_variable("v");
        net.restrict(v, lo, lo + w, "a").unwrap();
        let first = net.restrict(v, lo2, lo2 + w2, "b");
        let snapshot = net.clone();
        if first.is_ok() {
            prop_assert_eq!(net.restrict(v, lo2, lo2 + w2, "b"), Ok(false));
            prop_assert_eq!(net.domain(v), snapshot.domain(v));
        } else {
            prop_assert!(!net.is_consistent());
        }
    }
}

#[test]
fn binding_outside_the_domain_fails() {
    let mut net = TemporalNetwork::new();
    let a = net.add_variable("a");
    let b = net.add_variable("b");
    net.add_constraint(b, a, 10, 20, "gap").unwrap();
    net.bind(a, 100, "a").unwrap();
    assert_eq!(net.domain(b), (110, 120));
    assert!(net.bind(b, 121, "b").is_err());
    assert!(!net.is_consistent());
    assert_eq!(net.distance(ORIGIN, a), 100);
}
