//! Boundary analysis.
//!
//! * [`regions`] splits capabilities into governed, ungoverned and theater
//!   sets by comparing the expressiveness boundary (what handlers exist)
//!   with the governance boundary (what the policy covers).
//! * [`gap_probability`] and [`simulate_monitor`] quantify how a monitor's
//!   per-action coverage compounds over many independent actions.
//! * [`layered_cost`] is the additive latency of stacked behavioral layers.
//!
//! Everything here works on capability identifiers, never on program
//! behavior.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directive::{Directive, EffectKind, Params, Phase, TrustLevel};
use crate::policy::{CapabilitySet, Policy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("coverage must lie in [0, 1], got {0}")]
    CoverageOutOfRange(f64),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionReport {
    /// Expressible and covered by policy.
    pub governed: CapabilitySet,
    /// Expressible but not covered: the risk region.
    pub ungoverned: CapabilitySet,
    /// Covered by policy but not expressible.
    pub theater: CapabilitySet,
    pub coterminous: bool,
}

pub fn regions(expressiveness: &CapabilitySet, policy: &Policy) -> RegionReport {
    let governance = policy.capabilities();
    let ungoverned = expressiveness.difference(&governance);
    let theater = governance.difference(expressiveness);
    RegionReport {
        governed: expressiveness.intersection(&governance),
        coterminous: ungoverned.is_empty() && theater.is_empty(),
        ungoverned,
        theater,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    capabilities: Vec<EffectKind>,
}

/// Parses `{"capabilities":["email.send", ...]}`.
pub fn load_manifest(bytes: &[u8]) -> Result<CapabilitySet, AnalysisError> {
    let m: Manifest = serde_json::from_slice(bytes).map_err(|e| AnalysisError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(m.capabilities.into_iter().collect())
}

fn check_coverage(coverage: f64) -> Result<(), AnalysisError> {
    if (0.0..=1.0).contains(&coverage) {
        Ok(())
    } else {
        Err(AnalysisError::CoverageOutOfRange(coverage))
    }
}

/// A monitor that sees each action independently with probability `coverage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapModel {
    coverage: f64,
    actions: u64,
}

impl GapModel {
    pub fn new(coverage: f64, actions: u64) -> Result<Self, AnalysisError> {
        check_coverage(coverage)?;
        Ok(GapModel { coverage, actions })
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn actions(&self) -> u64 {
        self.actions
    }

    /// `1 - coverage^actions`, evaluated as `-expm1(actions * ln(coverage))`
    /// so small gaps keep their relative precision.
    pub fn gap_probability(&self) -> f64 {
        if self.actions == 0 || self.coverage == 1.0 {
            return 0.0;
        }
        if self.coverage == 0.0 {
            return 1.0;
        }
        let log_cov = (self.coverage - 1.0).ln_1p();
        -(self.actions as f64 * log_cov).exp_m1()
    }
}

/// Probability that at least one of `actions` independent actions escapes a
/// monitor with per-action `coverage`.
pub fn gap_probability(coverage: f64, actions: u64) -> Result<f64, AnalysisError> {
    Ok(GapModel::new(coverage, actions)?.gap_probability())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonitorEstimate {
    pub trials: u64,
    pub breached: u64,
}

impl MonitorEstimate {
    pub fn frequency(&self) -> f64 {
        self.breached as f64 / self.trials as f64
    }
}

/// Standard deviation of a binomial proportion over `trials`.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Monte Carlo estimate of the gap probability.
///
/// Each trial draws up to `actions` Bernoulli(`coverage`) events and is
/// breached if any event misses. Trial `t` uses ChaCha8 seeded with `seed`
/// on stream `t`, so the result is platform-independent and every trial's
/// draws are independent of how trials are scheduled.
pub fn simulate_monitor(
    coverage: f64,
    actions: u64,
    trials: u64,
    seed: u64,
) -> Result<MonitorEstimate, AnalysisError> {
    check_coverage(coverage)?;
    if trials == 0 {
        return Err(AnalysisError::NoTrials);
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let breached = (0..trials)
        .filter(|&t| {
            let mut rng = base.clone();
            rng.set_stream(t);
            rng.set_word_pos(0);
            (0..actions).any(|_| rng.random::<f64>() >= coverage)
        })
        .count() as u64;
    Ok(MonitorEstimate { trials, breached })
}

/// Latency added by behavioral layers: `actions × Σ layers`. The base
/// per-action latency is paid with or without layers and is not included.
/// Structural governance is the empty layer list.
pub fn layered_cost(
    _base_latency_per_action: Duration,
    layer_latencies: &[Duration],
    actions: u64,
) -> Duration {
    let per_action: u128 = layer_latencies.iter().map(Duration::as_nanos).sum();
    let total = per_action * u128::from(actions);
    let secs = u64::try_from(total / 1_000_000_000).unwrap_or(u64::MAX);
    Duration::new(secs, (total % 1_000_000_000) as u32)
}

/// Every directive over `caps × trusts × phases` with empty params, ids in
/// enumeration order. Meant for small spaces.
pub fn enumerate_directives(
    caps: &CapabilitySet,
    trusts: &[TrustLevel],
    phases: &[Phase],
) -> Vec<Directive> {
    let mut out = Vec::with_capacity(caps.len() * trusts.len() * phases.len());
    for cap in caps {
        for &trust in trusts {
            for &phase in phases {
                let id = out.len() as u64;
                out.push(Directive::new(
                    cap.clone(),
                    Params::new(),
                    "enumerator",
                    trust,
                    phase,
                    id,
                ));
            }
        }
    }
    out
}
