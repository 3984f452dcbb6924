//! The governance boundary's rulebook.
//!
//! A [`Policy`] is an allow-list: one [`PolicyRule`] per capability, each with
//! a minimum issuer trust and the phases in which the capability may run.
//! Anything the policy does not mention is denied.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directive::{EffectKind, Phase, TrustLevel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("duplicate rule for capability {0}")]
    DuplicateCapability(EffectKind),
    #[error("rule for {0} allows no phases")]
    NoPhases(EffectKind),
    #[error("policy parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

/// Finite set of capabilities with exact-match membership.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapabilitySet(BTreeSet<EffectKind>);

impl CapabilitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cap: EffectKind) -> bool {
        self.0.insert(cap)
    }

    pub fn contains(&self, cap: &EffectKind) -> bool {
        self.0.contains(cap)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EffectKind> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &CapabilitySet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &CapabilitySet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn intersection(&self, other: &CapabilitySet) -> CapabilitySet {
        CapabilitySet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn union(&self, other: &CapabilitySet) -> CapabilitySet {
        CapabilitySet(self.0.union(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &CapabilitySet) -> CapabilitySet {
        CapabilitySet(self.0.difference(&other.0).cloned().collect())
    }

    /// Parses every name; fails on the first invalid one.
    pub fn from_names<I, S>(names: I) -> Result<Self, crate::DirectiveError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        names
            .into_iter()
            .map(|n| EffectKind::new(n.as_ref()))
            .collect()
    }
}

impl FromIterator<EffectKind> for CapabilitySet {
    fn from_iter<T: IntoIterator<Item = EffectKind>>(iter: T) -> Self {
        CapabilitySet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a CapabilitySet {
    type Item = &'a EffectKind;
    type IntoIter = std::collections::btree_set::Iter<'a, EffectKind>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Attenuates authority across a boundary: the result never exceeds either side.
pub fn narrow(outer: &CapabilitySet, inner: &CapabilitySet) -> CapabilitySet {
    outer.intersection(inner)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub capability: EffectKind,
    pub min_trust: TrustLevel,
    pub allowed_phases: BTreeSet<Phase>,
}

impl PolicyRule {
    pub fn new(
        capability: EffectKind,
        min_trust: TrustLevel,
        allowed_phases: impl IntoIterator<Item = Phase>,
    ) -> Self {
        PolicyRule {
            capability,
            min_trust,
            allowed_phases: allowed_phases.into_iter().collect(),
        }
    }

    pub fn admits_trust(&self, trust: TrustLevel) -> bool {
        trust >= self.min_trust
    }

    pub fn admits_phase(&self, phase: Phase) -> bool {
        self.allowed_phases.contains(&phase)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Policy {
    rules: BTreeMap<EffectKind, PolicyRule>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    rules: Vec<PolicyRule>,
}

impl Policy {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = PolicyRule>) -> Result<Self, PolicyError> {
        let mut map = BTreeMap::new();
        for rule in rules {
            if rule.allowed_phases.is_empty() {
                return Err(PolicyError::NoPhases(rule.capability));
            }
            if map.contains_key(&rule.capability) {
                return Err(PolicyError::DuplicateCapability(rule.capability));
            }
            map.insert(rule.capability.clone(), rule);
        }
        Ok(Policy { rules: map })
    }

    /// Every listed capability at `min_trust` in all phases.
    pub fn allow_all<'a>(
        caps: impl IntoIterator<Item = &'a EffectKind>,
        min_trust: TrustLevel,
    ) -> Self {
        let rules = caps
            .into_iter()
            .map(|c| (c.clone(), PolicyRule::new(c.clone(), min_trust, Phase::ALL)))
            .collect();
        Policy { rules }
    }

    pub fn lookup(&self, cap: &EffectKind) -> Option<&PolicyRule> {
        self.rules.get(cap)
    }

    pub fn rules(&self) -> impl Iterator<Item = &PolicyRule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The governance boundary: the key set of the rules.
    pub fn capabilities(&self) -> CapabilitySet {
        self.rules.keys().cloned().collect()
    }
}

/// Parses the policy JSON format:
/// `{"rules":[{"capability":"email.send","min_trust":"agent","allowed_phases":["execute"]}]}`.
pub fn load_policy(document: &[u8]) -> Result<Policy, PolicyError> {
    let doc: PolicyDocument = serde_json::from_slice(document).map_err(|e| PolicyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Policy::from_rules(doc.rules)
}

/// Serializes in the same format `load_policy` reads, rules ordered by capability.
pub fn serialize_policy(policy: &Policy) -> Vec<u8> {
    let doc = PolicyDocument {
        rules: policy.rules.values().cloned().collect(),
    };
    serde_json::to_vec_pretty(&doc).expect("policy documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(s: &str) -> EffectKind {
        EffectKind::new(s).unwrap()
    }

    fn set(names: &[&str]) -> CapabilitySet {
        CapabilitySet::from_names(names).unwrap()
    }

    fn email_rule() -> PolicyRule {
        PolicyRule::new(kind("email.send"), TrustLevel::Agent, [Phase::Execute])
    }

    #[test]
    fn lookup_hits_and_misses() {
        let p = Policy::from_rules([email_rule()]).unwrap();
        assert_eq!(p.lookup(&kind("email.send")), Some(&email_rule()));
        assert_eq!(p.lookup(&kind("web.browse")), None);
        assert_eq!(Policy::empty().lookup(&kind("email.send")), None);
    }

    #[test]
    fn narrow_examples() {
        let a = set(&["email.send", "db.query"]);
        let b = set(&["db.query", "web.browse"]);
        assert_eq!(narrow(&a, &b), set(&["db.query"]));
        assert_eq!(narrow(&a, &a), a);
        assert_eq!(narrow(&a, &CapabilitySet::new()), CapabilitySet::new());
    }

    #[test]
    fn loads_two_rules() {
        let doc = br#"{"rules":[
            {"capability":"email.send","min_trust":"agent","allowed_phases":["execute"]},
            {"capability":"db.query","min_trust":"operator","allowed_phases":["plan","execute"]}
        ]}"#;
        let p = load_policy(doc).unwrap();
        assert_eq!(p.len(), 2);
        let db = p.lookup(&kind("db.query")).unwrap();
        assert_eq!(db.min_trust, TrustLevel::Operator);
        assert!(db.admits_phase(Phase::Plan));
        assert!(!db.admits_phase(Phase::Finalize));
    }

    #[test]
    fn duplicate_capability_named() {
        let doc = br#"{"rules":[
            {"capability":"email.send","min_trust":"agent","allowed_phases":["execute"]},
            {"capability":"email.send","min_trust":"system","allowed_phases":["plan"]}
        ]}"#;
        let err = load_policy(doc).unwrap_err();
        assert_eq!(err, PolicyError::DuplicateCapability(kind("email.send")));
        assert!(err.to_string().contains("email.send"));
    }

    #[test]
    fn unknown_trust_reports_position() {
        let doc = b"{\"rules\":[\n{\"capability\":\"a\",\"min_trust\":\"root\",\"allowed_phases\":[\"plan\"]}]}";
        match load_policy(doc).unwrap_err() {
            PolicyError::Parse {
                line,
                column,
                message,
            } => {
                assert_eq!(line, 2);
                assert!(column > 0);
                assert!(message.contains("root"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_phase_and_fields_rejected() {
        let phase =
            br#"{"rules":[{"capability":"a","min_trust":"agent","allowed_phases":["deploy"]}]}"#;
        assert!(matches!(load_policy(phase), Err(PolicyError::Parse { .. })));
        let field = br#"{"rules":[{"capability":"a","min_trust":"agent","allowed_phases":["plan"],"deny":true}]}"#;
        assert!(matches!(load_policy(field), Err(PolicyError::Parse { .. })));
        let top = br#"{"rules":[],"version":2}"#;
        assert!(matches!(load_policy(top), Err(PolicyError::Parse { .. })));
    }

    #[test]
    fn empty_phase_set_rejected() {
        let doc = br#"{"rules":[{"capability":"a","min_trust":"agent","allowed_phases":[]}]}"#;
        assert_eq!(
            load_policy(doc).unwrap_err(),
            PolicyError::NoPhases(kind("a"))
        );
    }

    #[test]
    fn nonexistent_capability_still_loads() {
        let doc = br#"{"rules":[{"capability":"credit_card.read","min_trust":"agent","allowed_phases":["execute"]}]}"#;
        let p = load_policy(doc).unwrap();
        assert!(p.capabilities().contains(&kind("credit_card.read")));
    }

    #[test]
    fn serialize_then_load_is_identity() {
        let p = Policy::from_rules([
            email_rule(),
            PolicyRule::new(kind("web.browse"), TrustLevel::System, Phase::ALL),
        ])
        .unwrap();
        assert_eq!(load_policy(&serialize_policy(&p)).unwrap(), p);
    }
}
