//! The governance boundary.
//!
//! [`decide`] is a pure, syntactic function of a policy and a directive. It
//! runs three checks in a fixed order and the first failure names the
//! reason:
//!
//! 1. capability: the policy has a rule for the directive's capability;
//! 2. trust: the issuer's trust is at least the rule's minimum;
//! 3. phase: the directive's phase is one the rule allows.
//!
//! [`Kernel::submit`] wraps that decision with execution and provenance. For
//! each directive it decides, runs the handler if allowed, and appends a
//! record to the chain. It does this for denials too, and holds one lock
//! across all three steps.

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::directive::{Directive, EffectKind, Params, Phase, Scalar, TrustLevel};
use crate::effects::{self, HandlerError, SimWorld};
use crate::policy::{CapabilitySet, Policy};
use crate::provenance::{result_digest, Chain, ChainError, ExecStatus, Hash32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Granted,
    NoCapability,
    InsufficientTrust,
    PhaseViolation,
}

/// Allow/deny verdict with its reason. `Allow` always pairs with `Granted`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDecision")]
pub struct Decision {
    reason: Reason,
    verdict: Verdict,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecision {
    reason: Reason,
    verdict: Verdict,
}

impl TryFrom<RawDecision> for Decision {
    type Error = String;

    fn try_from(raw: RawDecision) -> Result<Self, Self::Error> {
        match (raw.verdict, raw.reason) {
            (Verdict::Allow, Reason::Granted) => Ok(Decision::allow()),
            (Verdict::Deny, r) if r != Reason::Granted => Ok(Decision::deny(r)),
            (v, r) => Err(format!("inconsistent decision: {v:?} with {r:?}")),
        }
    }
}

impl Decision {
    pub fn allow() -> Self {
        Decision {
            reason: Reason::Granted,
            verdict: Verdict::Allow,
        }
    }

    /// # Panics
    /// If `reason` is `Granted`.
    pub fn deny(reason: Reason) -> Self {
        assert_ne!(reason, Reason::Granted, "a denial needs a failure reason");
        Decision {
            reason,
            verdict: Verdict::Deny,
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn reason(&self) -> Reason {
        self.reason
    }

    pub fn is_allow(&self) -> bool {
        self.verdict == Verdict::Allow
    }
}

/// Pure decision over the directive's declared fields. Never looks at params.
pub fn decide(policy: &Policy, d: &Directive) -> Decision {
    let Some(rule) = policy.lookup(d.required_capability()) else {
        return Decision::deny(Reason::NoCapability);
    };
    if !rule.admits_trust(d.trust()) {
        return Decision::deny(Reason::InsufficientTrust);
    }
    if !rule.admits_phase(d.phase()) {
        return Decision::deny(Reason::PhaseViolation);
    }
    Decision::allow()
}

/// The effect implementations the simulated world offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinHandler {
    EmailSend,
    DbQuery,
    WebBrowse,
}

impl BuiltinHandler {
    pub const ALL: [BuiltinHandler; 3] = [
        BuiltinHandler::EmailSend,
        BuiltinHandler::DbQuery,
        BuiltinHandler::WebBrowse,
    ];

    pub fn default_kind(self) -> EffectKind {
        let name = match self {
            BuiltinHandler::EmailSend => "email.send",
            BuiltinHandler::DbQuery => "db.query",
            BuiltinHandler::WebBrowse => "web.browse",
        };
        EffectKind::new(name).expect("builtin kinds are valid")
    }

    pub(crate) fn invoke(
        self,
        world: &mut SimWorld,
        d: &Directive,
    ) -> Result<Scalar, HandlerError> {
        match self {
            BuiltinHandler::EmailSend => effects::handler_email_send(world, d),
            BuiltinHandler::DbQuery => effects::handler_db_query(world, d),
            BuiltinHandler::WebBrowse => effects::handler_web_browse(world, d),
        }
    }
}

/// Capability → handler. Its key set is the system's expressiveness boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HandlerRegistry {
    handlers: BTreeMap<EffectKind, BuiltinHandler>,
}

impl HandlerRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// email.send, db.query and web.browse.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        for h in BuiltinHandler::ALL {
            r.register(h.default_kind(), h);
        }
        r
    }

    pub fn register(&mut self, kind: EffectKind, handler: BuiltinHandler) -> &mut Self {
        self.handlers.insert(kind, handler);
        self
    }

    /// Keeps only handlers whose capability is in `caps`.
    pub fn restricted_to(&self, caps: &CapabilitySet) -> Self {
        HandlerRegistry {
            handlers: self
                .handlers
                .iter()
                .filter(|(k, _)| caps.contains(k))
                .map(|(k, h)| (k.clone(), *h))
                .collect(),
        }
    }

    pub fn get(&self, kind: &EffectKind) -> Option<BuiltinHandler> {
        self.handlers.get(kind).copied()
    }

    pub fn capabilities(&self) -> CapabilitySet {
        self.handlers.keys().cloned().collect()
    }
}

/// What the caller of [`Kernel::submit`] gets back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutionOutcome {
    Executed {
        id: u64,
        result: Scalar,
    },
    Denied {
        id: u64,
        reason: Reason,
    },
    Failed {
        id: u64,
        error: HandlerError,
    },
    /// Allowed by a rule that covers a capability nothing implements: a
    /// theater rule. Treated as a denial for lack of capability.
    HandlerMissing {
        id: u64,
    },
}

impl ExecutionOutcome {
    pub fn id(&self) -> u64 {
        match self {
            ExecutionOutcome::Executed { id, .. }
            | ExecutionOutcome::Denied { id, .. }
            | ExecutionOutcome::Failed { id, .. }
            | ExecutionOutcome::HandlerMissing { id } => *id,
        }
    }

    pub fn result(&self) -> Option<&Scalar> {
        match self {
            ExecutionOutcome::Executed { result, .. } => Some(result),
            _ => None,
        }
    }

    /// The effective denial reason, including the execution-stage denial for
    /// a missing handler.
    pub fn denial_reason(&self) -> Option<Reason> {
        match self {
            ExecutionOutcome::Denied { reason, .. } => Some(*reason),
            ExecutionOutcome::HandlerMissing { .. } => Some(Reason::NoCapability),
            _ => None,
        }
    }
}

struct KernelState {
    world: SimWorld,
    chain: Chain,
    next_id: u64,
    flagged: Vec<u64>,
}

/// Single governance boundary owning the world and the provenance chain.
///
/// `submit` may be called from many threads; each (decide, execute, append)
/// triple runs under one lock, so chain order is execution order.
pub struct Kernel {
    policy: Policy,
    registry: HandlerRegistry,
    state: Mutex<KernelState>,
}

impl Kernel {
    pub fn new(policy: Policy, registry: HandlerRegistry, world: SimWorld) -> Self {
        Self::build(policy, registry, world, Chain::new())
    }

    /// Continues an existing chain, which must verify.
    pub fn with_chain(
        policy: Policy,
        registry: HandlerRegistry,
        world: SimWorld,
        chain: Chain,
    ) -> Result<Self, ChainError> {
        if let Some(bad) = chain.verify().first_bad_index {
            return Err(ChainError::Broken(bad));
        }
        Ok(Self::build(policy, registry, world, chain))
    }

    fn build(policy: Policy, registry: HandlerRegistry, world: SimWorld, chain: Chain) -> Self {
        let next_id = chain
            .records()
            .iter()
            .map(|r| r.directive.id() + 1)
            .max()
            .unwrap_or(0);
        Kernel {
            policy,
            registry,
            state: Mutex::new(KernelState {
                world,
                chain,
                next_id,
                flagged: Vec::new(),
            }),
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn registry(&self) -> &HandlerRegistry {
        &self.registry
    }

    fn lock(&self) -> MutexGuard<'_, KernelState> {
        // A panic while holding the lock cannot leave a half-appended record:
        // the chain push is the last step and is itself atomic.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Decides, executes if allowed, and records. Ids are taken as given.
    pub fn submit(&self, d: Directive) -> ExecutionOutcome {
        let mut state = self.lock();
        state.next_id = state.next_id.max(d.id().saturating_add(1));
        self.process(&mut state, d)
    }

    /// Like `submit`, but the kernel assigns the next directive id.
    pub fn issue(
        &self,
        kind: EffectKind,
        params: Params,
        issuer: &str,
        trust: TrustLevel,
        phase: Phase,
    ) -> ExecutionOutcome {
        let mut state = self.lock();
        let id = state.next_id;
        state.next_id += 1;
        let d = Directive::new(kind, params, issuer, trust, phase, id);
        self.process(&mut state, d)
    }

    fn process(&self, state: &mut KernelState, d: Directive) -> ExecutionOutcome {
        let decision = decide(&self.policy, &d);
        let id = d.id();
        let (status, digest, outcome) = if !decision.is_allow() {
            (
                ExecStatus::Skipped,
                Hash32::ZERO,
                ExecutionOutcome::Denied {
                    id,
                    reason: decision.reason(),
                },
            )
        } else {
            match self.registry.get(d.kind()) {
                None => {
                    state.flagged.push(id);
                    (
                        ExecStatus::HandlerMissing,
                        Hash32::ZERO,
                        ExecutionOutcome::HandlerMissing { id },
                    )
                }
                Some(handler) => match handler.invoke(&mut state.world, &d) {
                    Ok(result) => (
                        ExecStatus::Executed,
                        result_digest(&result),
                        ExecutionOutcome::Executed { id, result },
                    ),
                    Err(error) => (
                        ExecStatus::Failed,
                        Hash32::ZERO,
                        ExecutionOutcome::Failed { id, error },
                    ),
                },
            }
        };
        state
            .chain
            .append(d, decision, status, digest)
            .expect("the kernel's chain is only ever extended by append");
        outcome
    }

    pub fn chain_len(&self) -> usize {
        self.lock().chain.len()
    }

    pub fn chain_snapshot(&self) -> Chain {
        self.lock().chain.clone()
    }

    pub fn world_snapshot(&self) -> SimWorld {
        self.lock().world.clone()
    }

    /// Ids of directives allowed by a rule for which no handler exists.
    pub fn flagged(&self) -> Vec<u64> {
        self.lock().flagged.clone()
    }

    pub fn into_parts(self) -> (SimWorld, Chain) {
        let state = self.state.into_inner().unwrap_or_else(|e| e.into_inner());
        (state.world, state.chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directive::make_directive;
    use crate::policy::PolicyRule;

    fn kind(s: &str) -> EffectKind {
        EffectKind::new(s).unwrap()
    }

    fn email_policy(min_trust: TrustLevel) -> Policy {
        Policy::from_rules([PolicyRule::new(
            kind("email.send"),
            min_trust,
            [Phase::Execute],
        )])
        .unwrap()
    }

    fn email(trust: TrustLevel, phase: Phase, id: u64) -> Directive {
        let p = Params::from([("to".into(), "a@b".into()), ("body".into(), "hi".into())]);
        make_directive("email.send", p, "s", trust, phase, id).unwrap()
    }

    #[test]
    fn decide_examples() {
        let p = email_policy(TrustLevel::Agent);
        assert_eq!(
            decide(&p, &email(TrustLevel::Agent, Phase::Execute, 0)),
            Decision::allow()
        );
        let browse = make_directive(
            "web.browse",
            Params::new(),
            "s",
            TrustLevel::System,
            Phase::Execute,
            0,
        )
        .unwrap();
        assert_eq!(decide(&p, &browse), Decision::deny(Reason::NoCapability));
        let op = email_policy(TrustLevel::Operator);
        assert_eq!(
            decide(&op, &email(TrustLevel::Agent, Phase::Execute, 0)),
            Decision::deny(Reason::InsufficientTrust)
        );
        assert_eq!(
            decide(&p, &email(TrustLevel::System, Phase::Plan, 0)),
            Decision::deny(Reason::PhaseViolation)
        );
    }

    #[test]
    fn trust_failure_reported_before_phase() {
        let op = email_policy(TrustLevel::Operator);
        assert_eq!(
            decide(&op, &email(TrustLevel::Agent, Phase::Plan, 0)).reason(),
            Reason::InsufficientTrust
        );
    }

    #[test]
    fn decision_json_enforces_pairing() {
        let ok: Decision =
            serde_json::from_str(r#"{"reason":"phase_violation","verdict":"deny"}"#).unwrap();
        assert_eq!(ok, Decision::deny(Reason::PhaseViolation));
        assert!(
            serde_json::from_str::<Decision>(r#"{"reason":"granted","verdict":"deny"}"#).is_err()
        );
        assert!(serde_json::from_str::<Decision>(
            r#"{"reason":"no_capability","verdict":"allow"}"#
        )
        .is_err());
        assert_eq!(
            crate::canonical::to_string(&Decision::allow()),
            r#"{"reason":"granted","verdict":"allow"}"#
        );
    }

    #[test]
    fn allowed_send_adds_one_email_and_one_record() {
        let k = Kernel::new(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            SimWorld::seeded(),
        );
        let out = k.submit(email(TrustLevel::Agent, Phase::Execute, 1));
        assert_eq!(
            out,
            ExecutionOutcome::Executed {
                id: 1,
                result: "sent".into()
            }
        );
        assert_eq!(k.world_snapshot().outbox().len(), 1);
        assert_eq!(k.chain_len(), 1);
    }

    #[test]
    fn denied_browse_records_without_effect() {
        let k = Kernel::new(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            SimWorld::seeded(),
        );
        let before = k.world_snapshot();
        let p = Params::from([("url".into(), "http://x/?q=SECRET".into())]);
        let out = k.submit(
            make_directive("web.browse", p, "s", TrustLevel::Agent, Phase::Execute, 3).unwrap(),
        );
        assert_eq!(out.denial_reason(), Some(Reason::NoCapability));
        assert_eq!(k.world_snapshot(), before);
        let chain = k.chain_snapshot();
        assert_eq!(chain.len(), 1);
        assert_eq!(
            chain.records()[0].decision,
            Decision::deny(Reason::NoCapability)
        );
        assert_eq!(chain.records()[0].exec_status, ExecStatus::Skipped);
        assert!(chain.records()[0].result_digest.is_zero());
    }

    #[test]
    fn theater_rule_is_flagged_not_executed() {
        let policy = Policy::from_rules([PolicyRule::new(
            kind("credit_card.scan"),
            TrustLevel::Untrusted,
            Phase::ALL,
        )])
        .unwrap();
        let k = Kernel::new(policy, HandlerRegistry::standard(), SimWorld::seeded());
        let d = make_directive(
            "credit_card.scan",
            Params::new(),
            "s",
            TrustLevel::Agent,
            Phase::Execute,
            0,
        )
        .unwrap();
        let out = k.submit(d);
        assert_eq!(out, ExecutionOutcome::HandlerMissing { id: 0 });
        assert_eq!(out.denial_reason(), Some(Reason::NoCapability));
        assert_eq!(k.flagged(), vec![0]);
        let chain = k.chain_snapshot();
        let r = &chain.records()[0];
        assert_eq!(r.decision, Decision::allow());
        assert_eq!(r.exec_status, ExecStatus::HandlerMissing);
    }

    #[test]
    fn handler_failure_recorded_and_run_continues() {
        let k = Kernel::new(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            SimWorld::seeded(),
        );
        let bad = make_directive(
            "email.send",
            Params::new(),
            "s",
            TrustLevel::Agent,
            Phase::Execute,
            0,
        )
        .unwrap();
        assert!(matches!(k.submit(bad), ExecutionOutcome::Failed { .. }));
        assert!(matches!(
            k.submit(email(TrustLevel::Agent, Phase::Execute, 1)),
            ExecutionOutcome::Executed { .. }
        ));
        let chain = k.chain_snapshot();
        assert_eq!(chain.records()[0].exec_status, ExecStatus::Failed);
        assert_eq!(chain.records()[1].exec_status, ExecStatus::Executed);
        assert_eq!(k.world_snapshot().journal().len(), 1);
    }

    #[test]
    fn issue_assigns_sequential_ids() {
        let k = Kernel::new(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            SimWorld::empty(),
        );
        let p = Params::from([("to".into(), "a".into()), ("body".into(), "b".into())]);
        for expected in 0..3 {
            let out = k.issue(
                kind("email.send"),
                p.clone(),
                "s",
                TrustLevel::Agent,
                Phase::Execute,
            );
            assert_eq!(out.id(), expected);
        }
        k.submit(email(TrustLevel::Agent, Phase::Execute, 10));
        let out = k.issue(
            kind("email.send"),
            p,
            "s",
            TrustLevel::Agent,
            Phase::Execute,
        );
        assert_eq!(out.id(), 11);
    }

    #[test]
    fn with_chain_continues_ids_and_rejects_damage() {
        let k = Kernel::new(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            SimWorld::empty(),
        );
        k.submit(email(TrustLevel::Agent, Phase::Execute, 4));
        let (world, chain) = k.into_parts();
        let k2 = Kernel::with_chain(
            email_policy(TrustLevel::Agent),
            HandlerRegistry::standard(),
            world.clone(),
            chain.clone(),
        )
        .unwrap();
        let p = Params::from([("to".into(), "a".into()), ("body".into(), "b".into())]);
        assert_eq!(
            k2.issue(
                kind("email.send"),
                p,
                "s",
                TrustLevel::Agent,
                Phase::Execute
            )
            .id(),
            5
        );
        assert_eq!(k2.chain_len(), 2);

        let mut records = chain.records().to_vec();
        records[0].seq = 7;
        let damaged = Chain::from_records_unchecked(records);
        assert!(
            Kernel::with_chain(Policy::empty(), HandlerRegistry::empty(), world, damaged).is_err()
        );
    }

    #[test]
    fn registry_restriction() {
        let caps = CapabilitySet::from_names(["email.send", "nope.x"]).unwrap();
        let r = HandlerRegistry::standard().restricted_to(&caps);
        assert_eq!(
            r.capabilities(),
            CapabilitySet::from_names(["email.send"]).unwrap()
        );
    }
}
