//! Composition laws, determinism, purity and the journal/allow bijection over
//! generated workflows.

use coterminous::scenario::NodeSpec;
use coterminous::testkit::{self, journal_matches_allows, shapes};
use coterminous::{run, seq_compose, HandlerRegistry, Kernel, Policy, SimWorld};
use proptest::prelude::*;
use serde_json::Value;

fn fresh(policy: &Policy, registry: &HandlerRegistry, world: SimWorld) -> Kernel {
    Kernel::new(policy.clone(), registry.clone(), world)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn seq_chain_is_concatenation(
        a in testkit::node_spec(),
        b in testkit::node_spec(),
        policy in testkit::policy(),
        registry in testkit::registry(),
        input in testkit::input_value(),
    ) {
        let (wa, wb) = (a.compile(), b.compile());
        let whole = fresh(&policy, &registry, SimWorld::seeded());
        let joint = run(&seq_compose(wa.clone(), wb.clone()), input.clone(), &whole);

        let ka = fresh(&policy, &registry, SimWorld::seeded());
        let ra = run(&wa, input, &ka);
        let kb = fresh(&policy, &registry, ka.world_snapshot());
        let rb = run(&wb, ra.output.clone(), &kb);

        let offset = ra.chain.len() as u64;
        let mut expected = shapes(ra.chain.records(), 0);
        expected.extend(shapes(rb.chain.records(), 0).into_iter().map(|mut s| {
            s.directive = s.directive.clone().with_id(s.directive.id() + offset);
            s
        }));
        prop_assert_eq!(shapes(joint.chain.records(), 0), expected);
        prop_assert_eq!(joint.output, rb.output);
    }

    #[test]
    fn seq_is_associative(
        a in testkit::node_spec(),
        b in testkit::node_spec(),
        c in testkit::node_spec(),
        policy in testkit::policy(),
        input in testkit::input_value(),
    ) {
        let reg = HandlerRegistry::standard();
        let (wa, wb, wc) = (a.compile(), b.compile(), c.compile());
        let k1 = fresh(&policy, &reg, SimWorld::seeded());
        let k2 = fresh(&policy, &reg, SimWorld::seeded());
        let left = run(&seq_compose(wa.clone(), seq_compose(wb.clone(), wc.clone())), input.clone(), &k1);
        let right = run(&seq_compose(seq_compose(wa, wb), wc), input, &k2);
        prop_assert_eq!(left.chain, right.chain);
        prop_assert_eq!(left.output, right.output);
        prop_assert_eq!(k1.world_snapshot(), k2.world_snapshot());
    }

    #[test]
    fn runs_are_deterministic(
        w in testkit::node_spec(),
        policy in testkit::policy(),
        registry in testkit::registry(),
        input in testkit::input_value(),
    ) {
        let wf = w.compile();
        let k1 = fresh(&policy, &registry, SimWorld::seeded());
        let k2 = fresh(&policy, &registry, SimWorld::seeded());
        let r1 = run(&wf, input.clone(), &k1);
        let r2 = run(&wf, input, &k2);
        prop_assert_eq!(r1.chain.export_to_vec(), r2.chain.export_to_vec());
        prop_assert_eq!(r1.output, r2.output);
    }

    #[test]
    fn journal_and_allows_correspond(
        w in testkit::node_spec(),
        policy in testkit::policy(),
        registry in testkit::registry(),
        input in testkit::input_value(),
    ) {
        let k = fresh(&policy, &registry, SimWorld::seeded());
        let r = run(&w.compile(), input, &k);
        prop_assert_eq!(r.directives_issued, r.chain.len());
        prop_assert!(r.chain.verify().valid);
        let world = k.world_snapshot();
        if let Err(msg) = journal_matches_allows(&world, &r.chain) {
            return Err(TestCaseError::fail(msg));
        }
    }

    #[test]
    fn deny_everything_leaves_world_untouched(
        w in testkit::node_spec(),
        registry in testkit::registry(),
        input in testkit::input_value(),
    ) {
        let k = fresh(&Policy::empty(), &registry, SimWorld::seeded());
        let r = run(&w.compile(), input.clone(), &k);
        prop_assert_eq!(k.world_snapshot(), SimWorld::seeded());
        prop_assert!(r.chain.records().iter().all(|rec| !rec.decision.is_allow()));
        let again = run(&w.compile(), input, &fresh(&Policy::empty(), &registry, SimWorld::seeded()));
        prop_assert_eq!(r.output, again.output);
    }

    #[test]
    fn evaluation_is_stable_under_double_evaluation(spec in testkit::node_spec(), input in testkit::input_value()) {
        // Step functions are required to be deterministic; the built-in
        // vocabulary is checked here by evaluating each tree twice.
        let w = spec.compile();
        let k1 = fresh(&Policy::empty(), &HandlerRegistry::empty(), SimWorld::empty());
        let k2 = fresh(&Policy::empty(), &HandlerRegistry::empty(), SimWorld::empty());
        prop_assert_eq!(run(&w, input.clone(), &k1).output, run(&w, input, &k2).output);
    }
}

#[test]
fn identity_and_constant_branch_laws() {
    use coterminous::scenario::{Condition, StepSpec};
    let emit: NodeSpec = serde_json::from_str(
        r#"{"emit":{"name":"m","kind":"email.send","params":{"to":"a@b","body":"$input"}}}"#,
    )
    .unwrap();
    let policy = Policy::allow_all(
        &HandlerRegistry::standard().capabilities(),
        coterminous::TrustLevel::Agent,
    );
    let reg = HandlerRegistry::standard();

    let unit = NodeSpec::Seq(vec![emit.clone(), NodeSpec::Step(StepSpec::Identity)]);
    let k1 = fresh(&policy, &reg, SimWorld::seeded());
    let k2 = fresh(&policy, &reg, SimWorld::seeded());
    let a = run(&unit.compile(), Value::from("hi"), &k1);
    let b = run(&emit.compile(), Value::from("hi"), &k2);
    assert_eq!(a.chain, b.chain);
    assert_eq!(a.output, b.output);

    let branch = NodeSpec::Branch {
        condition: Condition::Always(true),
        then: Box::new(emit.clone()),
        otherwise: Box::new(NodeSpec::Step(StepSpec::Identity)),
    };
    let k3 = fresh(&policy, &reg, SimWorld::seeded());
    assert_eq!(
        run(&branch.compile(), Value::from("hi"), &k3).chain,
        b.chain
    );
}
