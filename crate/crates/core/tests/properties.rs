mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fd_gradient_matches_polynomial_derivative(terms in prop::collection::vec(monomial(), 1..=4), x in ball_point()) {
        check_gradient(&terms, &x)?;
    }

    #[test]
    fn projection_is_nearest_point((factors, y, z) in projection_case()) {
        check_projection(&factors, &y, &z)?;
    }

    #[test]
    fn penalty_dominates_objective_and_grows_with_weight(
        spec in penalty_form(),
        x in [-50.0..50.0f64, -50.0..50.0f64],
        c in 0.01..100.0f64,
        factor in 1.0..10.0f64,
    ) {
        check_penalty_monotone(spec, &x, c, c * factor)?;
    }
}

#[test]
fn corpus_expressions_round_trip() {
    let failures = corpus_roundtrip_failures();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn certifier_verdicts_are_consistent() {
    let failures = consistency_failures();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn corpus_report_is_deterministic() {
    assert!(reports_identical());
}
