//! Structural effect governance.
//!
//! Workflows are pure: they compute values and emit [`Directive`]s. A single
//! [`Kernel`] decides every directive against a [`Policy`], performs allowed
//! effects on a simulated world, and appends a hash-linked
//! [`ProvenanceRecord`] for every decision, allowed or denied. The
//! [`analysis`] module compares what a system can do with what its policy
//! covers.

pub mod analysis;
pub mod canonical;
pub mod directive;
pub mod effects;
pub mod kernel;
pub mod policy;
pub mod provenance;
pub mod scenario;
pub mod workflow;

#[cfg(feature = "bench-backdoor")]
pub mod backdoor;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use analysis::{
    gap_probability, layered_cost, regions, simulate_monitor, AnalysisError, GapModel,
    MonitorEstimate, RegionReport,
};
pub use directive::{
    canonical_bytes, make_directive, parse_directive, Directive, DirectiveError, EffectKind,
    Params, Phase, Scalar, TrustLevel,
};
pub use effects::{HandlerError, SimWorld};
pub use kernel::{
    decide, BuiltinHandler, Decision, ExecutionOutcome, HandlerRegistry, Kernel, Reason, Verdict,
};
pub use policy::{
    load_policy, narrow, serialize_policy, CapabilitySet, Policy, PolicyError, PolicyRule,
};
pub use provenance::{
    Chain, ChainError, ExecStatus, Hash32, ImportError, ProvenanceRecord, VerificationReport,
};
pub use scenario::{Scenario, ScenarioError};
pub use workflow::{branch_compose, iterate_compose, run, seq_compose, RunResult, Workflow};
