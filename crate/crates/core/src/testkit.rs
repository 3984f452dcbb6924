//! Test support: proptest strategies for directives, policies, registries
//! and scenario workflows, plus projections used to compare chains.
//! Enabled with the `testkit` feature.

use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;
use proptest::sample::select;
use serde_json::{json, Value};

use crate::directive::{Directive, EffectKind, Params, Phase, Scalar, TrustLevel};
use crate::kernel::{BuiltinHandler, HandlerRegistry};
use crate::policy::{CapabilitySet, Policy, PolicyRule};
use crate::scenario::{Condition, EmitSpec, NodeSpec, StepSpec};

/// Capabilities the strategies draw from: the three built-in handlers plus
/// one that nothing implements.
pub const KIND_POOL: [&str; 4] = ["email.send", "db.query", "web.browse", "credit_card.scan"];

pub fn pool_kind() -> impl Strategy<Value = EffectKind> {
    select(&KIND_POOL[..]).prop_map(|k| EffectKind::new(k).unwrap())
}

/// Any string matching the effect-kind grammar.
pub fn any_kind() -> impl Strategy<Value = EffectKind> {
    "[a-z0-9_]{1,8}(\\.[a-z0-9_]{1,8}){0,2}".prop_map(|s| EffectKind::new(s).unwrap())
}

pub fn trust() -> impl Strategy<Value = TrustLevel> {
    select(&TrustLevel::ALL[..])
}

pub fn phase() -> impl Strategy<Value = Phase> {
    select(&Phase::ALL[..])
}

pub fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        any::<bool>().prop_map(Scalar::Bool),
        any::<i64>().prop_map(Scalar::Int),
        "\\PC{0,12}".prop_map(Scalar::Str),
    ]
}

pub fn params() -> impl Strategy<Value = Params> {
    btree_map("[a-z_]{1,6}", scalar(), 0..5)
}

pub fn directive() -> impl Strategy<Value = Directive> {
    (
        prop_oneof![pool_kind(), any_kind()],
        params(),
        "[a-z0-9]{1,6}",
        trust(),
        phase(),
        any::<u64>(),
    )
        .prop_map(|(k, p, issuer, t, ph, id)| Directive::new(k, p, issuer, t, ph, id))
}

pub fn capability_set() -> impl Strategy<Value = CapabilitySet> {
    btree_set(prop_oneof![pool_kind(), any_kind()], 0..6).prop_map(|s| s.into_iter().collect())
}

pub fn rule_for(kind: EffectKind) -> impl Strategy<Value = PolicyRule> {
    (trust(), btree_set(phase(), 1..=3))
        .prop_map(move |(t, phases)| PolicyRule::new(kind.clone(), t, phases))
}

/// Policies over a subset of [`KIND_POOL`].
pub fn policy() -> impl Strategy<Value = Policy> {
    let rules: Vec<_> = KIND_POOL
        .iter()
        .map(|k| proptest::option::of(rule_for(EffectKind::new(*k).unwrap())))
        .collect();
    rules.prop_map(|rs| Policy::from_rules(rs.into_iter().flatten()).unwrap())
}

/// Policies that admit most generated emits: each pool capability is present
/// with high probability, usually at a low trust floor and including the
/// execute phase. Mixed with [`policy`] so runs actually execute effects.
pub fn lenient_policy() -> impl Strategy<Value = Policy> {
    let rule = |k: &'static str| {
        let trust = prop_oneof![3 => Just(TrustLevel::Untrusted), 3 => Just(TrustLevel::Agent), 1 => trust()];
        let phases = btree_set(phase(), 0..=2).prop_map(|mut p| {
            p.insert(Phase::Execute);
            p
        });
        proptest::option::weighted(
            0.85,
            (trust, phases)
                .prop_map(move |(t, p)| PolicyRule::new(EffectKind::new(k).unwrap(), t, p)),
        )
    };
    let rules: Vec<_> = KIND_POOL.iter().map(|k| rule(k)).collect();
    rules.prop_map(|rs| Policy::from_rules(rs.into_iter().flatten()).unwrap())
}

/// Either a random policy or a lenient one, half the time each.
pub fn mixed_policy() -> impl Strategy<Value = Policy> {
    prop_oneof![policy(), lenient_policy()]
}

/// A subset of the built-in handlers.
pub fn registry() -> impl Strategy<Value = HandlerRegistry> {
    btree_set(0usize..3, 0..=3).prop_map(|picks| {
        let mut r = HandlerRegistry::empty();
        for i in picks {
            let h = BuiltinHandler::ALL[i];
            r.register(h.default_kind(), h);
        }
        r
    })
}

/// A random registry or the full standard one, half the time each.
pub fn mixed_registry() -> impl Strategy<Value = HandlerRegistry> {
    prop_oneof![registry(), Just(HandlerRegistry::standard())]
}

fn template() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        3 => Just(Scalar::from("$input")),
        1 => Just(Scalar::from("$input.name")),
        2 => "[a-z@.]{0,8}".prop_map(Scalar::Str),
        1 => (-5i64..5).prop_map(Scalar::Int),
    ]
}

fn emit_params(kind: &str) -> BoxedStrategy<std::collections::BTreeMap<String, Scalar>> {
    match kind {
        "email.send" => (template(), template(), any::<bool>())
            .prop_map(|(to, body, complete)| {
                let mut m = std::collections::BTreeMap::from([("body".to_owned(), body)]);
                if complete {
                    m.insert("to".to_owned(), to);
                }
                m
            })
            .boxed(),
        "db.query" => (
            select(&["sensitive", "products", "missing"][..]),
            select(&["*", "name", "ssn", "sku", "title"][..]),
        )
            .prop_map(|(t, s)| {
                std::collections::BTreeMap::from([
                    ("select".to_owned(), Scalar::from(s)),
                    ("table".to_owned(), Scalar::from(t)),
                ])
            })
            .boxed(),
        "web.browse" => template()
            .prop_map(|u| std::collections::BTreeMap::from([("url".to_owned(), u)]))
            .boxed(),
        _ => btree_map("[a-z]{1,4}", template(), 0..3).boxed(),
    }
}

/// Emits lean towards the execute phase and mid-to-high trust, the region
/// where policies most often admit them.
pub fn emit_spec() -> impl Strategy<Value = EmitSpec> {
    let trust = prop_oneof![
        1 => Just(TrustLevel::Untrusted),
        3 => Just(TrustLevel::Agent),
        2 => Just(TrustLevel::Operator),
        2 => Just(TrustLevel::System),
    ];
    let phase =
        prop_oneof![1 => Just(Phase::Plan), 4 => Just(Phase::Execute), 1 => Just(Phase::Finalize)];
    (select(&KIND_POOL[..]), "[a-z]{1,6}", trust, phase).prop_flat_map(|(k, name, t, ph)| {
        emit_params(k).prop_map(move |params| EmitSpec {
            name: name.clone(),
            kind: EffectKind::new(k).unwrap(),
            trust: t,
            phase: ph,
            params,
        })
    })
}

fn json_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        "[a-z ]{0,6}".prop_map(Value::String),
        (-3i64..3).prop_map(|i| json!(i)),
        vec("[a-z]{1,4}", 0..4).prop_map(|v| json!(v)),
        "[a-z]{1,4}".prop_map(|n| json!({"name": n, "items": [n, "x"]})),
    ]
}

pub fn step_spec() -> impl Strategy<Value = StepSpec> {
    prop_oneof![
        Just(StepSpec::Identity),
        "[a-z]{1,5}".prop_map(|h| StepSpec::EncodeUrl {
            base: format!("http://{h}.example/"),
            param: "q".into()
        }),
        select(&["name", "items", "ssn"][..])
            .prop_map(|f| StepSpec::SelectField { field: f.into() }),
        json_value().prop_map(|value| StepSpec::Const { value }),
        ("[a-z]{0,3}", "[a-z]{0,3}")
            .prop_map(|(prefix, suffix)| StepSpec::Concat { prefix, suffix }),
    ]
}

fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![
        any::<bool>().prop_map(Condition::Always),
        Just(Condition::IsNull),
        json_value().prop_map(Condition::Equals),
    ]
}

/// Workflow trees of bounded depth built from the scenario vocabulary.
pub fn node_spec() -> impl Strategy<Value = NodeSpec> {
    let leaf = prop_oneof![
        2 => step_spec().prop_map(NodeSpec::Step),
        3 => emit_spec().prop_map(NodeSpec::Emit),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            3 => vec(inner.clone(), 0..4).prop_map(NodeSpec::Seq),
            1 => (condition(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| NodeSpec::Branch {
                condition: c,
                then: Box::new(a),
                otherwise: Box::new(b),
            }),
            1 => (select(&["$input", "items"][..]), inner).prop_map(|(over, body)| NodeSpec::Iterate {
                over: over.into(),
                body: Box::new(body),
            }),
        ]
    })
}

/// A top-level sequence of one to five generated trees.
pub fn workflow_spec() -> impl Strategy<Value = NodeSpec> {
    vec(node_spec(), 1..=5).prop_map(NodeSpec::Seq)
}

pub fn input_value() -> impl Strategy<Value = Value> {
    json_value()
}

/// A record with position-dependent data removed: the directive id is
/// shifted by `-offset` and seq/hashes are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordShape {
    pub directive: Directive,
    pub decision: crate::kernel::Decision,
    pub exec_status: crate::provenance::ExecStatus,
    pub result_digest: crate::provenance::Hash32,
}

pub fn shapes(records: &[crate::provenance::ProvenanceRecord], offset: u64) -> Vec<RecordShape> {
    records
        .iter()
        .map(|r| RecordShape {
            directive: r.directive.clone().with_id(r.directive.id() - offset),
            decision: r.decision,
            exec_status: r.exec_status,
            result_digest: r.result_digest,
        })
        .collect()
}

/// Checks the journal/allow correspondence for one run. Every journal entry
/// must match exactly one allowed, executed record by directive id, and vice
/// versa. Allowed records that did not execute must have no journal entry.
pub fn journal_matches_allows(
    world: &crate::effects::SimWorld,
    chain: &crate::provenance::Chain,
) -> Result<(), String> {
    use crate::provenance::ExecStatus;
    let mut journal: Vec<u64> = world.journal().iter().map(|e| e.directive_id).collect();
    let mut executed: Vec<u64> = chain
        .records()
        .iter()
        .filter(|r| r.decision.is_allow() && r.exec_status == ExecStatus::Executed)
        .map(|r| r.directive.id())
        .collect();
    for r in chain.records() {
        if !r.decision.is_allow() && r.exec_status != ExecStatus::Skipped {
            return Err(format!(
                "denied record {} has status {:?}",
                r.seq, r.exec_status
            ));
        }
    }
    journal.sort_unstable();
    executed.sort_unstable();
    if journal.windows(2).any(|w| w[0] == w[1]) {
        return Err(format!("duplicate journal ids {journal:?}"));
    }
    if journal != executed {
        return Err(format!(
            "journal {journal:?} != executed allows {executed:?}"
        ));
    }
    Ok(())
}
