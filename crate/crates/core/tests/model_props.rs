use std::cmp::Ordering;

use construe::model::{obs_cmp, obs_less, Observation};
use proptest::prelude::*;

fn observation() -> impl Strategy<Value = Observation> {
    (0i64..6, 0i64..3, prop::sample::select(vec!["a", "b", "c"]))
        .prop_map(|(b, d, q)| Observation::new("x", q, b, b + d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn obs_less_is_a_strict_total_order(a in observation(), b in observation(), c in observation()) {
        prop_assert!(!obs_less(&a, &a));
        prop_assert!(!(obs_less(&a, &b) && obs_less(&b, &a)));
        if obs_less(&a, &b) && obs_less(&b, &c) {
            prop_assert!(obs_less(&a, &c));
        }
        let same_key = (a.t_begin, a.t_end, &a.observable) == (b.t_begin, b.t_end, &b.observable);
        prop_assert_eq!(same_key, !obs_less(&a, &b) && !obs_less(&b, &a));
    }

    #[test]
    fn begin_time_dominates(a in observation(), b in observation()) {
        if a.t_begin < b.t_begin {
            prop_assert_eq!(obs_cmp(&a, &b), Ordering::Less);
        }
    }
}
