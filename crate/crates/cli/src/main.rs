//! `coterminous`: run governed scenarios, verify provenance chains, compare
//! expressiveness and governance boundaries, and measure overhead.
//!
//! Output is JSON on stdout unless `--human` is given. Exit status is 0 on
//! success, 1 for a governance finding (non-coterminous boundaries, invalid
//! chain) and 2 for usage, I/O or parse errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coterminous::analysis::{binomial_sigma, load_manifest};
use coterminous::provenance::ImportError;
use coterminous::{
    gap_probability, load_policy, regions, run, simulate_monitor, Chain, Kernel, Policy, Scenario,
    SimWorld,
};
use coterminous_bench::{run_suite, BenchConfig, BenchSuite};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "coterminous",
    version,
    about = "Structural effect governance toolkit"
)]
struct Cli {
    /// Print a human-readable summary instead of JSON.
    #[arg(long, global = true)]
    human: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario under a policy and write its provenance chain.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Destination for the JSONL chain.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify an exported provenance chain.
    Verify { chain: PathBuf },
    /// Report governed, ungoverned and theater capabilities.
    Regions {
        #[arg(long)]
        capabilities: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Analytic and Monte Carlo probability that some action escapes a monitor.
    SimulateMonitor {
        #[arg(long)]
        coverage: f64,
        #[arg(long)]
        actions: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Governed vs direct latency and context message passing.
    Bench {
        #[arg(long, default_value_t = coterminous_bench::DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = coterminous_bench::DEFAULT_WARMUP)]
        warmup: usize,
        #[arg(long, default_value_t = coterminous_bench::DEFAULT_CONTEXT_BYTES)]
        context_bytes: usize,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed invocation: exit 2 with a message on stderr.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

type Outcome = Result<ExitCode, Usage>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            policy,
            out,
        } => cmd_run(&scenario, &policy, &out, cli.human),
        Command::Verify { chain } => cmd_verify(&chain, cli.human),
        Command::Regions {
            capabilities,
            policy,
        } => cmd_regions(&capabilities, &policy, cli.human),
        Command::SimulateMonitor {
            coverage,
            actions,
            trials,
            seed,
        } => cmd_simulate(coverage, actions, trials, seed, cli.human),
        Command::Bench {
            iters,
            warmup,
            context_bytes,
            out,
        } => cmd_bench(
            BenchConfig { iters, warmup },
            context_bytes,
            out.as_deref(),
            cli.human,
        ),
    };
    result.unwrap_or_else(|Usage(msg)| {
        eprintln!("error: {msg}");
        ExitCode::from(2)
    })
}

fn read(path: &Path) -> Result<Vec<u8>, Usage> {
    fs::read(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn read_policy(path: &Path) -> Result<Policy, Usage> {
    load_policy(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn emit_json(v: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("values serialize")
    );
}

fn finding(found: bool) -> ExitCode {
    if found {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_run(scenario_path: &Path, policy_path: &Path, out: &Path, human: bool) -> Outcome {
    let scenario = Scenario::load(&read(scenario_path)?)
        .map_err(|e| Usage(format!("{}: {e}", scenario_path.display())))?;
    let policy = read_policy(policy_path)?;
    let kernel = Kernel::new(policy, scenario.registry()?, SimWorld::seeded());
    let result = run(&scenario.workflow(), scenario.input.clone(), &kernel);
    let flagged = kernel.flagged();
    let (world, chain) = kernel.into_parts();
    fs::write(out, chain.export_to_vec()).map_err(|e| Usage(format!("{}: {e}", out.display())))?;

    let records = chain.records();
    let allowed = records.iter().filter(|r| r.decision.is_allow()).count();
    let denials: Vec<Value> = records
        .iter()
        .filter(|r| !r.decision.is_allow())
        .map(|r| json!({"id": r.directive.id(), "kind": r.directive.kind(), "reason": r.decision.reason()}))
        .collect();
    let db_reads = world
        .journal()
        .iter()
        .filter(|j| j.kind == coterminous::effects::MutationKind::DbRead)
        .count();

    if human {
        println!(
            "scenario {}: {} directives, {} allowed, {} denied",
            scenario.name,
            records.len(),
            allowed,
            denials.len()
        );
        for r in records {
            let verdict = if r.decision.is_allow() {
                "allow"
            } else {
                "deny "
            };
            println!(
                "  {verdict} #{} {} ({}, {})",
                r.directive.id(),
                r.directive.kind(),
                json!(r.decision.reason()).as_str().unwrap_or_default(),
                json!(r.exec_status).as_str().unwrap_or_default(),
            );
        }
        for e in world.outbox() {
            println!("  email sent to {}", e.to);
        }
        for url in world.http_log() {
            println!("  http request {url}");
        }
        if !flagged.is_empty() {
            println!("  flagged (allowed without handler): {flagged:?}");
        }
        println!("chain: {} records -> {}", records.len(), out.display());
    } else {
        emit_json(&json!({
            "scenario": scenario.name,
            "directives": records.len(),
            "allowed": allowed,
            "denied": denials.len(),
            "denials": denials,
            "flagged": flagged,
            "output": result.output,
            "world": {
                "emails_sent": world.outbox(),
                "http_requests": world.http_log(),
                "db_reads": db_reads,
            },
            "chain": {
                "path": out,
                "records": records.len(),
                "head_hash": chain.head_hash(),
            },
        }));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(path: &Path, human: bool) -> Outcome {
    let bytes = read(path)?;
    let (report, detail) = match Chain::import(&bytes) {
        Ok(chain) => (
            json!({"valid": true, "records": chain.len(), "first_bad_index": null}),
            None,
        ),
        Err(ImportError::Parse { line, message }) => {
            return Err(Usage(format!("{}: line {line}: {message}", path.display())));
        }
        Err(e) => (
            json!({"valid": false, "first_bad_index": e.record_index(), "error": e.to_string()}),
            Some(e),
        ),
    };
    if human {
        match &detail {
            None => println!("valid: {} records", report["records"]),
            Some(e) => println!("invalid at record {}: {e}", e.record_index()),
        }
    } else {
        emit_json(&report);
    }
    Ok(finding(detail.is_some()))
}

fn cmd_regions(capabilities: &Path, policy_path: &Path, human: bool) -> Outcome {
    let caps = load_manifest(&read(capabilities)?)
        .map_err(|e| Usage(format!("{}: {e}", capabilities.display())))?;
    let policy = read_policy(policy_path)?;
    let report = regions(&caps, &policy);
    if human {
        let names = |s: &coterminous::CapabilitySet| {
            s.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
        };
        println!("governed:    {{{}}}", names(&report.governed));
        println!("ungoverned:  {{{}}}", names(&report.ungoverned));
        println!("theater:     {{{}}}", names(&report.theater));
        println!("coterminous: {}", report.coterminous);
    } else {
        emit_json(&serde_json::to_value(&report)?);
    }
    Ok(finding(!report.coterminous))
}

fn cmd_simulate(coverage: f64, actions: u64, trials: u64, seed: u64, human: bool) -> Outcome {
    let analytic = gap_probability(coverage, actions)?;
    let estimate = simulate_monitor(coverage, actions, trials, seed)?;
    let empirical = estimate.frequency();
    let sigma = binomial_sigma(analytic, trials);
    if human {
        println!("coverage {coverage} over {actions} actions");
        println!("analytic:  {analytic:.5}");
        println!(
            "empirical: {empirical:.5} ({} of {trials} trials breached, sigma {sigma:.5})",
            estimate.breached
        );
    } else {
        emit_json(&json!({
            "coverage": coverage,
            "actions": actions,
            "trials": trials,
            "seed": seed,
            "analytic": analytic,
            "empirical": empirical,
            "breached": estimate.breached,
            "sigma": sigma,
        }));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(cfg: BenchConfig, context_bytes: usize, out: Option<&Path>, human: bool) -> Outcome {
    let suite: BenchSuite = run_suite(cfg, context_bytes)?;
    let text = serde_json::to_string_pretty(&suite)?;
    if let Some(path) = out {
        fs::write(path, &text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    }
    if human {
        for r in [&suite.governed, &suite.direct, &suite.context_message] {
            println!(
                "{:<16} median {:>9.2} us  mean {:>9.2} us  p99 {:>9.2} us",
                r.scenario, r.median_us, r.mean_us, r.p99_us
            );
        }
        println!("governed/direct median ratio: {:.2}", suite.overhead_ratio);
        println!("machine: {}", suite.governed.machine);
    } else if out.is_none() {
        println!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}
