//! Algebraic laws: capability narrowing, region partitions, canonical form.

use std::collections::HashSet;

use coterminous::canonical;
use coterminous::testkit;
use coterminous::{
    canonical_bytes, load_policy, narrow, parse_directive, regions, serialize_policy,
};
use coterminous::{HandlerRegistry, Policy, TrustLevel};
use proptest::prelude::*;

proptest! {
    #[test]
    fn narrowing_laws(a in testkit::capability_set(), b in testkit::capability_set(), c in testkit::capability_set()) {
        prop_assert_eq!(narrow(&a, &b), narrow(&b, &a));
        prop_assert_eq!(narrow(&narrow(&a, &b), &c), narrow(&a, &narrow(&b, &c)));
        prop_assert_eq!(narrow(&a, &a), a.clone());
        prop_assert!(narrow(&a, &b).is_subset(&a));
        prop_assert!(narrow(&a, &b).is_subset(&b));
    }

    #[test]
    fn region_partition(expr in testkit::capability_set(), policy in testkit::policy()) {
        let r = regions(&expr, &policy);
        let gov = policy.capabilities();
        prop_assert!(r.governed.is_disjoint(&r.ungoverned));
        prop_assert!(r.governed.is_disjoint(&r.theater));
        prop_assert!(r.ungoverned.is_disjoint(&r.theater));
        prop_assert_eq!(r.governed.union(&r.ungoverned), expr.clone());
        prop_assert_eq!(r.governed.union(&r.theater), gov.clone());
        prop_assert_eq!(r.coterminous, expr == gov);
    }

    #[test]
    fn coterminous_iff_registry_matches_policy(registry in testkit::registry(), policy in testkit::policy()) {
        let report = regions(&registry.capabilities(), &policy);
        prop_assert_eq!(report.coterminous, registry.capabilities() == policy.capabilities());
    }

    #[test]
    fn policy_serialization_round_trips(policy in testkit::policy()) {
        prop_assert_eq!(load_policy(&serialize_policy(&policy)).unwrap(), policy);
    }

    #[test]
    fn canonical_bytes_sorted_and_invertible(d in testkit::directive()) {
        let bytes = canonical_bytes(&d);
        prop_assert_eq!(&bytes, &canonical::via_value(&d));
        prop_assert_eq!(parse_directive(&bytes).unwrap(), d);
    }
}

#[test]
fn canonical_bytes_injective_over_corpus() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let strategy = testkit::directive();
    let mut seen_directives = HashSet::new();
    let mut seen_bytes = HashSet::new();
    while seen_directives.len() < 10_000 {
        let d = strategy.new_tree(&mut runner).unwrap().current();
        let bytes = canonical_bytes(&d);
        let new_directive = seen_directives.insert(d);
        let new_bytes = seen_bytes.insert(bytes);
        assert_eq!(
            new_directive, new_bytes,
            "distinct directives must have distinct bytes"
        );
    }
    assert_eq!(seen_bytes.len(), 10_000);
}

#[test]
fn full_policy_is_coterminous_with_standard_handlers() {
    let reg = HandlerRegistry::standard();
    let policy = Policy::allow_all(&reg.capabilities(), TrustLevel::Agent);
    assert!(regions(&reg.capabilities(), &policy).coterminous);
}
