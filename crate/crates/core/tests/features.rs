mod common;

use asnm_core::context::sliding_windows;
use asnm_core::features::{ExtractOptions, Extractor, FeatureCatalog};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn time_bins_conserve_sizes(seed in any::<u64>(), conns in 1usize..10) {
        let trace = common::random_trace(seed, conns, 200);
        prop_assert_eq!(common::check_bin_conservation(&trace), Ok(()));
    }

    #[test]
    fn extraction_is_deterministic(seed in any::<u64>(), conns in 1usize..10) {
        let trace = common::random_trace(seed, conns, 200);
        let conns = common::connections(&trace);
        let catalog = FeatureCatalog::builtin();
        let ex = Extractor::new(&catalog, &conns, ExtractOptions::default());
        let parallel = ex.extract_all();
        let windows = sliding_windows(&conns, 300.0);
        let serial: Vec<_> = conns.iter().zip(&windows).map(|(c, w)| ex.extract(c, w).unwrap()).collect();
        prop_assert_eq!(&parallel, &serial);
        prop_assert_eq!(parallel, ex.extract_all());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parseval_holds(xs in proptest::collection::vec(-1e4f64..1e4, 0..40)) {
        prop_assert_eq!(common::check_parseval(&xs), Ok(()));
    }

    #[test]
    fn polynomials_are_recovered(coeffs in proptest::collection::vec(-100.0f64..100.0, 1..10), extra in 0usize..200) {
        let n = coeffs.len() + extra.max(1);
        prop_assert_eq!(common::check_poly_recovery(&coeffs, n), Ok(()));
    }
}

#[test]
fn catalog_degrees_are_recovered() {
    let coeffs = |degree: usize| (0..=degree).map(|i| (i as f64 * 0.7).sin() * 3.0).collect::<Vec<f64>>();
    for degree in [3usize, 8] {
        for n in [degree + 1, degree + 5, 64, 500] {
            assert_eq!(common::check_poly_recovery(&coeffs(degree), n), Ok(()), "degree {degree}, n {n}");
        }
    }
    // Degree 13 on this basis has condition number above 1e9, so only the
    // fitted values are held to 1e-6.
    for n in [14, 18, 64, 500] {
        assert_eq!(common::check_poly_values(&coeffs(13), n), Ok(()), "n {n}");
    }
}
