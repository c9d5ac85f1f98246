mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn windows_grow_and_exclude_center(seed in any::<u64>(), conns in 0usize..30, taus in proptest::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..2000.0], 1..5)) {
        let trace = common::random_trace(seed, conns, 3000);
        let all = common::connections(&trace);
        prop_assert_eq!(common::check_context(&all, &taus), Ok(()));
    }
}
