//! Batch scenario runner. Exit codes: 0 all verdicts pass, 1 a verdict
//! failed, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atsim::runner::{self, CheckMode, RunnerError};

#[derive(Parser)]
#[command(name = "atsim", version, about = "Consensus-free asset transfer: simulate, check, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one seed and check it.
    Run {
        /// Bundled scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for trace (.jsonl) and result (.json) files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's broadcast mode: idealized|quorum[:f]|raw.
        #[arg(long)]
        broadcast: Option<String>,
        /// exact | monitors-only
        #[arg(long, default_value = "exact")]
        check: String,
    },
    /// Run many seeds (or every interleaving) and aggregate verdicts.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Seed range, e.g. 0..1000.
        #[arg(long)]
        seeds: Option<String>,
        /// Enumerate every interleaving instead of sampling seeds.
        #[arg(long, default_value_t = false)]
        exhaustive: bool,
        #[arg(long, default_value = "exact")]
        check: String,
    },
    /// Compare the broadcast protocol against a total-order sequencer.
    Baseline {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_check(spec: &str) -> Result<CheckMode, RunnerError> {
    match spec {
        "exact" => Ok(CheckMode::Exact),
        "monitors-only" => Ok(CheckMode::MonitorsOnly),
        other => Err(RunnerError::Config(format!(
            "unknown check mode '{other}' (exact|monitors-only)"
        ))),
    }
}

fn parse_seeds(spec: &str) -> Result<(u64, u64), RunnerError> {
    let parts: Vec<&str> = spec.split("..").collect();
    match parts.as_slice() {
        [lo, hi] => {
            let lo = lo
                .parse()
                .map_err(|_| RunnerError::Config(format!("bad seed range '{spec}'")))?;
            let hi = hi
                .parse()
                .map_err(|_| RunnerError::Config(format!("bad seed range '{spec}'")))?;
            Ok((lo, hi))
        }
        _ => Err(RunnerError::Config(format!(
            "seed range must look like a..b, got '{spec}'"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool, RunnerError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            broadcast,
            check,
        } => {
            let check = parse_check(&check)?;
            let (result, artifacts) =
                runner::cmd_run(&scenario, seed, &out, broadcast.as_deref(), check)?;
            for v in &result.verdicts {
                println!(
                    "{} {}: {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.detail
                );
            }
            println!(
                "result: {} (trace: {})",
                artifacts.result_path.display(),
                artifacts
                    .trace_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "suppressed".to_string())
            );
            Ok(result.all_pass())
        }
        Command::Sweep {
            scenario,
            seeds,
            exhaustive,
            check,
        } => {
            let check = parse_check(&check)?;
            let seeds = seeds.as_deref().map(parse_seeds).transpose()?;
            let summary = runner::cmd_sweep(&scenario, seeds, exhaustive, check)?;
            if summary.exhaustive {
                println!(
                    "{}: {}/{} interleavings pass",
                    summary.scenario, summary.passes, summary.runs
                );
            } else {
                println!(
                    "{}: {}/{} seeds pass ({:.1}%)",
                    summary.scenario,
                    summary.passes,
                    summary.runs,
                    summary.pass_rate * 100.0
                );
            }
            println!(
                "mean latency {:.1} steps, mean messages {:.1}, mean broadcasts {:.1}, mean transfers applied {:.1}",
                summary.latency_mean,
                summary.messages_mean,
                summary.broadcasts_mean,
                summary.transfers_mean
            );
            if let Some(failure) = &summary.first_failure {
                println!("first failure: {failure}");
            }
            Ok(summary.passes == summary.runs)
        }
        Command::Baseline { scenario, seed } => {
            let report = runner::cmd_baseline(&scenario, seed)?;
            println!(
                "{}: {} transfers",
                report.scenario, report.transfers
            );
            println!(
                "broadcast protocol: {} messages ({:.1} per transfer)",
                report.broadcast_messages, report.broadcast_per_transfer
            );
            println!(
                "sequencer baseline: {} messages ({:.1} per transfer)",
                report.baseline_messages, report.baseline_per_transfer
            );
            println!("baseline/broadcast ratio: {:.2}", report.ratio);
            Ok(report.broadcast_all_pass && report.baseline_all_pass)
        }
    }
}
