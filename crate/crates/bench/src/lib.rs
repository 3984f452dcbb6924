//! Overhead measurements for the governance boundary.
//!
//! Two scenarios, both one `email.send` per iteration:
//!
//! * governed vs direct: the same directive goes through [`Kernel::submit`]
//!   (decision, handler, provenance append) or straight to the handler via
//!   the feature-gated backdoor.
//! * context message: a caller thread sends the directive plus a serialized
//!   governance context to a kernel thread and waits for the reply.
//!
//! Latencies come from a monotonic clock around each iteration; percentiles
//! use nearest rank.

use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use coterminous::backdoor::invoke_direct;
use coterminous::{
    make_directive, Directive, HandlerRegistry, Kernel, Params, Phase, Policy, Scalar, SimWorld,
    TrustLevel,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ITERS: usize = 50;
pub const DEFAULT_WARMUP: usize = 5;
pub const DEFAULT_CONTEXT_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("kernel context stopped responding")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub iters: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iters: DEFAULT_ITERS,
            warmup: DEFAULT_WARMUP,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<(), BenchError> {
        if self.iters == 0 {
            Err(BenchError::ZeroIterations)
        } else {
            Ok(())
        }
    }
}

/// Published figures from a BEAM/OTP 27 system on Apple Silicon, kept next
/// to local measurements for comparison. They are not targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub median_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p99_ms: Option<f64>,
    pub platform: String,
}

impl ReferenceFigures {
    fn beam(median_ms: f64, mean_ms: Option<f64>, p99_ms: Option<f64>) -> Self {
        ReferenceFigures {
            median_ms,
            mean_ms,
            p99_ms,
            platform: "Apple Silicon (M-series), BEAM/OTP 27, n=50, 5 warmup".into(),
        }
    }

    pub fn governed() -> Self {
        Self::beam(0.23, Some(0.32), Some(1.77))
    }

    pub fn direct() -> Self {
        Self::beam(0.24, Some(0.26), None)
    }

    pub fn context_4kb() -> Self {
        Self::beam(0.38, None, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub iterations: usize,
    pub warmup: usize,
    pub median_us: f64,
    pub mean_us: f64,
    pub p99_us: f64,
    pub machine: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceFigures>,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 · n)`.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub p99: f64,
}

pub fn summarize(samples: &[f64]) -> Summary {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        median: nearest_rank(&sorted, 50.0),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p99: nearest_rank(&sorted, 99.0),
    }
}

pub fn machine_descriptor() -> String {
    let cpus = thread::available_parallelism().map_or(1, |n| n.get());
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{}-{} cpus={} build={}",
        std::env::consts::ARCH,
        std::env::consts::OS,
        cpus,
        profile
    )
}

fn report(
    scenario: &str,
    cfg: BenchConfig,
    samples: &[f64],
    reference: Option<ReferenceFigures>,
) -> BenchReport {
    let s = summarize(samples);
    BenchReport {
        scenario: scenario.to_owned(),
        iterations: cfg.iters,
        warmup: cfg.warmup,
        median_us: s.median,
        mean_us: s.mean,
        p99_us: s.p99,
        machine: machine_descriptor(),
        context_bytes: None,
        reference,
    }
}

/// Runs `warmup` unrecorded calls, then times `iters` calls in microseconds.
fn measure(cfg: BenchConfig, mut f: impl FnMut(u64)) -> Vec<f64> {
    for i in 0..cfg.warmup {
        f(i as u64);
    }
    (0..cfg.iters)
        .map(|i| {
            let start = Instant::now();
            f((cfg.warmup + i) as u64);
            start.elapsed().as_secs_f64() * 1e6
        })
        .collect()
}

fn workload(id: u64) -> Directive {
    let params = Params::from([
        ("to".to_owned(), Scalar::from("ops@example.com")),
        ("body".to_owned(), Scalar::from("nightly report ready")),
    ]);
    make_directive(
        "email.send",
        params,
        "bench",
        TrustLevel::Agent,
        Phase::Execute,
        id,
    )
    .expect("workload kind is valid")
}

fn bench_kernel() -> Kernel {
    let registry = HandlerRegistry::standard();
    let policy = Policy::allow_all(&registry.capabilities(), TrustLevel::Agent);
    Kernel::new(policy, registry, SimWorld::seeded())
}

/// Identical workloads through the boundary and around it.
/// Returns `(governed, direct)`.
pub fn bench_governed_vs_direct(
    cfg: BenchConfig,
) -> Result<(BenchReport, BenchReport), BenchError> {
    cfg.validate()?;

    let kernel = bench_kernel();
    let governed = measure(cfg, |i| {
        let out = kernel.submit(workload(i));
        debug_assert!(out.result().is_some());
    });

    let registry = HandlerRegistry::standard();
    let mut world = SimWorld::seeded();
    let direct = measure(cfg, |i| {
        let out = invoke_direct(&registry, &mut world, &workload(i));
        debug_assert!(matches!(out, Some(Ok(_))));
    });

    Ok((
        report(
            "governed",
            cfg,
            &governed,
            Some(ReferenceFigures::governed()),
        ),
        report("direct", cfg, &direct, Some(ReferenceFigures::direct())),
    ))
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    context: String,
    directive: Directive,
}

/// Deterministic filler standing in for a serialized governance context.
fn context_payload(size: usize) -> Vec<u8> {
    (0..size)
        .map(|i| (i.wrapping_mul(31) ^ (i >> 3)) as u8)
        .collect()
}

/// Round trip between two execution contexts: the caller serializes the
/// directive and its context; the kernel thread decodes both, commits the
/// context digest into the directive's params, submits, and replies.
pub fn bench_context_message(
    context_size: usize,
    cfg: BenchConfig,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let (to_kernel, kernel_inbox) = mpsc::channel::<Vec<u8>>();
    let (to_caller, caller_inbox) = mpsc::channel::<Vec<u8>>();

    let server = thread::spawn(move || {
        let kernel = bench_kernel();
        for msg in kernel_inbox {
            let env: Envelope = serde_json::from_slice(&msg).expect("caller sends valid envelopes");
            let context = hex::decode(&env.context).expect("context is hex");
            let d = env.directive;
            let mut params = d.params().clone();
            params.insert("context_sha256".into(), Scalar::Str(sha256_hex(&context)));
            let d = Directive::new(
                d.kind().clone(),
                params,
                d.issuer(),
                d.trust(),
                d.phase(),
                d.id(),
            );
            let out = kernel.submit(d);
            let reply = serde_json::to_vec(&out.result().map(ToString::to_string))
                .expect("reply serializes");
            if to_caller.send(reply).is_err() {
                break;
            }
        }
    });

    let context = hex::encode(context_payload(context_size));
    let mut failed = false;
    let samples = measure(cfg, |i| {
        let env = Envelope {
            context: context.clone(),
            directive: workload(i),
        };
        let msg = serde_json::to_vec(&env).expect("envelope serializes");
        if to_kernel.send(msg).is_err() || caller_inbox.recv().is_err() {
            failed = true;
        }
    });
    drop(to_kernel);
    let joined = server.join();
    if failed || joined.is_err() {
        return Err(BenchError::Disconnected);
    }

    let reference = (context_size == DEFAULT_CONTEXT_BYTES).then(ReferenceFigures::context_4kb);
    let mut r = report("context_message", cfg, &samples, reference);
    r.context_bytes = Some(context_size);
    Ok(r)
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Everything `bench` reports in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub governed: BenchReport,
    pub direct: BenchReport,
    pub context_message: BenchReport,
    pub overhead_ratio: f64,
}

pub fn run_suite(cfg: BenchConfig, context_size: usize) -> Result<BenchSuite, BenchError> {
    let (governed, direct) = bench_governed_vs_direct(cfg)?;
    let context_message = bench_context_message(context_size, cfg)?;
    Ok(BenchSuite {
        overhead_ratio: governed.median_us / direct.median_us,
        governed,
        direct,
        context_message,
    })
}
