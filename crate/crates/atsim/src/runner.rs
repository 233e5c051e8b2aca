//! Scenario loading, verdict evaluation, and the batch entry points behind
//! the `atsim` binary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::checker::{
    check_linearizable, check_relaxed, History, MonitorCtx, RelaxedMode, SearchLimits,
};
use crate::ledger::{Pid, Response};
use crate::metrics::{self, Metrics};
use crate::mp::MpSystem;
use crate::shm::{SharedTransferSystem, SnapshotTransferSystem, TransferConsensusSystem};
use crate::sim::engine::{self, EventKey, System};
use crate::sim::trace::{EventKind, Outcome, Trace, TraceSink};
use crate::sim::{Algorithm, Model, Policy, Scenario, ScenarioError};

/// Bundled scenario corpus, runnable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig1_basic", include_str!("../scenarios/fig1_basic.json")),
    ("fig1_race", include_str!("../scenarios/fig1_race.json")),
    (
        "fig2_exhaustive_k2",
        include_str!("../scenarios/fig2_exhaustive_k2.json"),
    ),
    ("fig2_k3", include_str!("../scenarios/fig2_k3.json")),
    (
        "fig3_two_owners",
        include_str!("../scenarios/fig3_two_owners.json"),
    ),
    ("fig4_fairN4", include_str!("../scenarios/fig4_fairN4.json")),
    (
        "fig4_byz_doublespend_N7f2",
        include_str!("../scenarios/fig4_byz_doublespend_N7f2.json"),
    ),
    (
        "k7_compromised_account",
        include_str!("../scenarios/k7_compromised_account.json"),
    ),
    (
        "baseline_compare",
        include_str!("../scenarios/baseline_compare.json"),
    ),
];

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ScenarioError> for RunnerError {
    fn from(e: ScenarioError) -> Self {
        RunnerError::Config(e.to_string())
    }
}

impl From<engine::EngineError> for RunnerError {
    fn from(e: engine::EngineError) -> Self {
        RunnerError::Config(e.to_string())
    }
}

/// How much checking a run gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Exact history search plus monitors.
    Exact,
    /// Monitors only; skips the linearizability search.
    MonitorsOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl VerdictLine {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub verdicts: Vec<VerdictLine>,
    pub metrics: Metrics,
}

impl RunResult {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Loads a scenario from a bundled name or a filesystem path.
pub fn load_scenario(reference: &str) -> Result<Scenario, RunnerError> {
    if let Some((_, json)) = BUNDLED.iter().find(|(name, _)| *name == reference) {
        return Ok(Scenario::from_json(json)?);
    }
    let path = Path::new(reference);
    if !path.exists() {
        return Err(RunnerError::Config(format!(
            "scenario '{reference}' is neither a bundled name nor a file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    Ok(Scenario::from_json(&text)?)
}

/// All four simulated systems behind one scheduler-facing type.
#[derive(Clone)]
pub enum AnySystem {
    Snapshot(SnapshotTransferSystem),
    Consensus(TransferConsensusSystem),
    Shared(SharedTransferSystem),
    Mp(Box<MpSystem>),
}

impl System for AnySystem {
    fn enabled(&self) -> Vec<EventKey> {
        match self {
            AnySystem::Snapshot(s) => s.enabled(),
            AnySystem::Consensus(s) => s.enabled(),
            AnySystem::Shared(s) => s.enabled(),
            AnySystem::Mp(s) => s.enabled(),
        }
    }

    fn step(&mut self, key: EventKey, sink: &mut TraceSink) {
        match self {
            AnySystem::Snapshot(s) => s.step(key, sink),
            AnySystem::Consensus(s) => s.step(key, sink),
            AnySystem::Shared(s) => s.step(key, sink),
            AnySystem::Mp(s) => s.step(key, sink),
        }
    }

    fn crash(&mut self, p: Pid, sink: &mut TraceSink) {
        match self {
            AnySystem::Snapshot(s) => s.crash(p, sink),
            AnySystem::Consensus(s) => s.crash(p, sink),
            AnySystem::Shared(s) => s.crash(p, sink),
            AnySystem::Mp(s) => s.crash(p, sink),
        }
    }
}

pub fn build_system(scenario: &Scenario) -> Result<AnySystem, RunnerError> {
    scenario.validate()?;
    Ok(match (scenario.model, scenario.algorithm) {
        (Model::SharedMemory, Algorithm::SnapshotTransfer) => {
            let mut sys = SnapshotTransferSystem::new(
                scenario.n,
                scenario.q0(),
                scenario.ownership(),
                &scenario.scripts,
            );
            if scenario.options.injected_bug == Some(crate::sim::InjectedBug::SkipBalanceCheck) {
                sys = sys.with_skipped_balance_check();
            }
            AnySystem::Snapshot(sys)
        }
        (Model::SharedMemory, Algorithm::TransferConsensus) => {
            let proposals: Vec<(Pid, u64)> =
                scenario.proposals.iter().map(|(&p, &v)| (p, v)).collect();
            AnySystem::Consensus(
                TransferConsensusSystem::new(&proposals)
                    .map_err(|e| RunnerError::Config(e.to_string()))?,
            )
        }
        (Model::SharedMemory, Algorithm::SharedTransfer) => AnySystem::Shared(
            SharedTransferSystem::new(
                scenario.n,
                scenario.q0(),
                scenario.ownership(),
                &scenario.scripts,
            ),
        ),
        (Model::MessagePassing, Algorithm::BroadcastTransfer)
        | (Model::MessagePassing, Algorithm::SequencerBaseline) => {
            AnySystem::Mp(Box::new(MpSystem::from_scenario(scenario)))
        }
        (model, algorithm) => {
            return Err(RunnerError::Config(format!(
                "{algorithm:?} does not run in the {model:?} model"
            )))
        }
    })
}

fn monitor_ctx(scenario: &Scenario, trace: &Trace) -> MonitorCtx {
    MonitorCtx {
        q0: scenario.q0(),
        mu: scenario.ownership(),
        benign: scenario.benign().into_iter().collect(),
        correct: scenario.correct().into_iter().collect(),
        quiescent: trace.outcome == Outcome::Quiescent,
        per_account_sequencing: scenario.algorithm != Algorithm::SequencerBaseline,
    }
}

/// Runs the checker suite appropriate for the scenario's algorithm.
pub fn evaluate(scenario: &Scenario, trace: &Trace, check: CheckMode) -> Vec<VerdictLine> {
    let mut verdicts = Vec::new();
    let ctx = monitor_ctx(scenario, trace);
    let violations = crate::checker::monitors(trace, &ctx);
    verdicts.push(VerdictLine::new(
        "monitors",
        violations.is_empty(),
        if violations.is_empty() {
            "no violations".to_string()
        } else {
            format!(
                "{} violations: {}",
                violations.len(),
                violations
                    .iter()
                    .take(3)
                    .map(|v| format!("{}: {}", v.kind, v.detail))
                    .collect::<Vec<_>>()
                    .join("; ")
            )
        },
    ));

    match scenario.algorithm {
        Algorithm::SnapshotTransfer | Algorithm::SharedTransfer => {
            if check == CheckMode::Exact {
                let history = History::from_trace(trace);
                let line = match check_linearizable(
                    &history,
                    &scenario.q0(),
                    &scenario.ownership(),
                    &SearchLimits::default(),
                ) {
                    Ok(v) if v.pass => VerdictLine::new("linearizable", true, "witness found"),
                    Ok(v) => VerdictLine::new(
                        "linearizable",
                        false,
                        format!(
                            "violating prefix of {} ops",
                            v.violating_prefix.map(|p| p.len()).unwrap_or(0)
                        ),
                    ),
                    Err(e) => VerdictLine::new("linearizable", false, e.to_string()),
                };
                verdicts.push(line);
            }
            verdicts.push(liveness_line(scenario, trace));
        }
        Algorithm::TransferConsensus => {
            verdicts.extend(consensus_verdicts(scenario, trace));
        }
        Algorithm::BroadcastTransfer => {
            if check == CheckMode::Exact {
                let line = match check_relaxed(
                    trace,
                    &scenario.q0(),
                    &scenario.ownership(),
                    &ctx.correct,
                    RelaxedMode::TransfersAndOwnOps,
                    &SearchLimits::default(),
                ) {
                    Ok(report) if report.pass => {
                        VerdictLine::new("relaxed_correctness", true, "parts (1) and (2) hold")
                    }
                    Ok(report) => VerdictLine::new("relaxed_correctness", false, report.detail),
                    Err(e) => VerdictLine::new("relaxed_correctness", false, e.to_string()),
                };
                verdicts.push(line);
            }
            verdicts.push(liveness_line(scenario, trace));
        }
        Algorithm::SequencerBaseline => {
            verdicts.push(baseline_consistency(trace, &ctx));
            verdicts.push(liveness_line(scenario, trace));
        }
    }
    verdicts
}

/// Every operation invoked by a process that stays correct must complete.
fn liveness_line(scenario: &Scenario, trace: &Trace) -> VerdictLine {
    if trace.outcome != Outcome::Quiescent {
        return VerdictLine::new("liveness", false, "step bound exceeded");
    }
    let correct: BTreeSet<Pid> = scenario.correct().into_iter().collect();
    let mut pending = Vec::new();
    let mut invoked = BTreeSet::new();
    for event in &trace.events {
        match &event.kind {
            EventKind::Invoke { op, .. } if correct.contains(&op.pid) => {
                invoked.insert(*op);
            }
            EventKind::Respond { op, .. } => {
                invoked.remove(op);
            }
            _ => {}
        }
    }
    pending.extend(invoked);
    VerdictLine::new(
        "liveness",
        pending.is_empty(),
        if pending.is_empty() {
            "every correct-process operation completed".to_string()
        } else {
            format!("{} operations never completed", pending.len())
        },
    )
}

fn consensus_verdicts(scenario: &Scenario, trace: &Trace) -> Vec<VerdictLine> {
    let correct: BTreeSet<Pid> = scenario.correct().into_iter().collect();
    let mut decisions: Vec<(Pid, u64, u64)> = Vec::new();
    for event in &trace.events {
        if let EventKind::ConsDecide {
            value,
            winner_balance,
            ..
        } = event.kind
        {
            decisions.push((event.node, value, winner_balance));
        }
    }
    let termination = correct
        .iter()
        .all(|p| decisions.iter().any(|(q, _, _)| q == p));
    let agreement = decisions.windows(2).all(|w| w[0].1 == w[1].1);
    let validity = decisions
        .iter()
        .all(|(_, v, _)| scenario.proposals.values().any(|pv| pv == v));
    // The remaining balance names the winner; the decided value must be
    // exactly the winner's proposal.
    let winner_consistent = decisions.iter().all(|(_, v, balance)| {
        scenario.proposals.get(&Pid(*balance as u32)) == Some(v)
    });
    vec![
        VerdictLine::new(
            "termination",
            termination,
            format!("{} of {} correct decided", decisions.len(), correct.len()),
        ),
        VerdictLine::new("agreement", agreement, "all decisions equal"),
        VerdictLine::new("validity", validity, "decision was proposed"),
        VerdictLine::new(
            "winner_balance",
            winner_consistent,
            "balance identifies the winner",
        ),
    ]
}

/// Baseline replicas must apply identical prefixes and conserve money.
fn baseline_consistency(trace: &Trace, ctx: &MonitorCtx) -> VerdictLine {
    let mut per_node: std::collections::BTreeMap<Pid, Vec<crate::ledger::TransferRecord>> =
        Default::default();
    for event in &trace.events {
        if let EventKind::Apply { record, .. } = &event.kind {
            if ctx.correct.contains(&event.node) {
                per_node.entry(event.node).or_default().push(*record);
            }
        }
    }
    let mut rows: Vec<&Vec<crate::ledger::TransferRecord>> = per_node.values().collect();
    rows.sort_by_key(|r| r.len());
    let prefixes_ok = rows
        .windows(2)
        .all(|w| w[1].starts_with(w[0]));
    VerdictLine::new(
        "replica_prefixes",
        prefixes_ok,
        "ordered applies are prefix-related",
    )
}

/// Outputs written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub result_path: PathBuf,
    pub trace_path: Option<PathBuf>,
}

fn trace_files_enabled() -> bool {
    std::env::var("ATSIM_TRACE").map_or(true, |v| v != "0")
}

/// Parses a `--broadcast` override; `quorum` without a count picks the
/// largest `f` with `n > 3f`.
pub fn parse_broadcast(
    spec: &str,
    n: u32,
) -> Result<crate::sim::BroadcastMode, RunnerError> {
    use crate::sim::BroadcastMode;
    match spec {
        "idealized" => Ok(BroadcastMode::Idealized),
        "raw" => Ok(BroadcastMode::Raw),
        "quorum" => Ok(BroadcastMode::Quorum {
            f: n.saturating_sub(1) / 3,
        }),
        other => match other.strip_prefix("quorum:").and_then(|f| f.parse().ok()) {
            Some(f) => Ok(BroadcastMode::Quorum { f }),
            None => Err(RunnerError::Config(format!(
                "unknown broadcast mode '{other}' (idealized|quorum[:f]|raw)"
            ))),
        },
    }
}

/// `run` command: execute one scenario under one seed, check it, write
/// artifacts.
pub fn cmd_run(
    scenario_ref: &str,
    seed: u64,
    out_dir: &Path,
    broadcast_override: Option<&str>,
    check: CheckMode,
) -> Result<(RunResult, RunArtifacts), RunnerError> {
    let mut scenario = load_scenario(scenario_ref)?;
    if let Some(spec) = broadcast_override {
        scenario.broadcast = parse_broadcast(spec, scenario.n)?;
        scenario.validate()?;
    }
    let result = match &scenario.policy {
        Policy::Exhaustive { max_steps } => {
            let max_steps = *max_steps;
            exhaustive_result(&scenario, max_steps, check)?
        }
        policy => {
            let policy = policy.clone();
            let sys = build_system(&scenario)?;
            let trace = engine::run(
                sys,
                &policy,
                seed,
                &scenario.faults,
                scenario.options.step_bound,
                &scenario.name,
            )?;
            let verdicts = evaluate(&scenario, &trace, check);
            let result = RunResult {
                scenario: scenario.name.clone(),
                seed,
                outcome: trace.outcome,
                verdicts,
                metrics: metrics::from_trace(&trace),
            };
            return finish_run(&scenario, Some(&trace), result, out_dir);
        }
    };
    finish_run(&scenario, None, result, out_dir)
}

fn finish_run(
    scenario: &Scenario,
    trace: Option<&Trace>,
    result: RunResult,
    out_dir: &Path,
) -> Result<(RunResult, RunArtifacts), RunnerError> {
    std::fs::create_dir_all(out_dir)?;
    let stem = format!("{}-{}", scenario.name, result.seed);
    let result_path = out_dir.join(format!("{stem}.result.json"));
    std::fs::write(&result_path, serde_json::to_string_pretty(&result).unwrap())?;
    let trace_path = match (trace, trace_files_enabled()) {
        (Some(trace), true) => {
            let path = out_dir.join(format!("{stem}.trace.jsonl"));
            std::fs::write(&path, trace.to_jsonl())?;
            Some(path)
        }
        _ => None,
    };
    Ok((
        result,
        RunArtifacts {
            result_path,
            trace_path,
        },
    ))
}

/// Enumerate every interleaving and require each to pass.
fn exhaustive_result(
    scenario: &Scenario,
    max_steps: usize,
    check: CheckMode,
) -> Result<RunResult, RunnerError> {
    let sys = build_system(scenario)?;
    let mut total = 0usize;
    let mut failures = 0usize;
    let mut first_failure = String::new();
    let mut metrics = Metrics::default();
    for trace in engine::enumerate(sys, &scenario.faults, max_steps, &scenario.name)? {
        total += 1;
        let verdicts = evaluate(scenario, &trace, check);
        if verdicts.iter().any(|v| !v.pass) {
            failures += 1;
            if first_failure.is_empty() {
                let failing: Vec<String> = verdicts
                    .iter()
                    .filter(|v| !v.pass)
                    .map(|v| format!("{}: {}", v.name, v.detail))
                    .collect();
                first_failure = format!("interleaving {total}: {}", failing.join("; "));
            }
        }
        if total == 1 {
            metrics = metrics::from_trace(&trace);
        }
    }
    let pass = failures == 0;
    Ok(RunResult {
        scenario: scenario.name.clone(),
        seed: 0,
        outcome: Outcome::Quiescent,
        verdicts: vec![VerdictLine::new(
            "all_interleavings",
            pass,
            if pass {
                format!("{total}/{total} interleavings pass")
            } else {
                format!("{failures}/{total} interleavings fail; first: {first_failure}")
            },
        )],
        metrics,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub runs: u64,
    pub passes: u64,
    pub pass_rate: f64,
    pub exhaustive: bool,
    pub latency_mean: f64,
    pub messages_mean: f64,
    pub broadcasts_mean: f64,
    pub transfers_mean: f64,
    pub first_failure: Option<String>,
}

/// `sweep` command: many seeds (or full enumeration), aggregated.
pub fn cmd_sweep(
    scenario_ref: &str,
    seeds: Option<(u64, u64)>,
    exhaustive: bool,
    check: CheckMode,
) -> Result<SweepSummary, RunnerError> {
    let scenario = load_scenario(scenario_ref)?;
    let mut runs = 0u64;
    let mut passes = 0u64;
    let mut latency_sum = 0.0;
    let mut messages_sum = 0.0;
    let mut broadcasts_sum = 0.0;
    let mut transfers_sum = 0.0;
    let mut first_failure = None;

    if exhaustive || matches!(scenario.policy, Policy::Exhaustive { .. }) {
        let max_steps = match scenario.policy {
            Policy::Exhaustive { max_steps } => max_steps,
            _ => engine::ENUMERATION_STEP_CAP,
        };
        let sys = build_system(&scenario)?;
        for trace in engine::enumerate(sys, &scenario.faults, max_steps, &scenario.name)? {
            runs += 1;
            let verdicts = evaluate(&scenario, &trace, check);
            let m = metrics::from_trace(&trace);
            latency_sum += m.latency_mean;
            messages_sum += m.total_messages as f64;
            broadcasts_sum += m.broadcasts as f64;
            transfers_sum += m.transfers_applied as f64;
            if verdicts.iter().all(|v| v.pass) {
                passes += 1;
            } else if first_failure.is_none() {
                first_failure = Some(describe_failures(&verdicts, runs));
            }
        }
    } else {
        let (lo, hi) = seeds.ok_or_else(|| {
            RunnerError::Config("sweep needs --seeds a..b or --exhaustive".to_string())
        })?;
        for seed in lo..hi {
            let sys = build_system(&scenario)?;
            let trace = engine::run(
                sys,
                &scenario.policy,
                seed,
                &scenario.faults,
                scenario.options.step_bound,
                &scenario.name,
            )?;
            let verdicts = evaluate(&scenario, &trace, check);
            let m = metrics::from_trace(&trace);
            runs += 1;
            latency_sum += m.latency_mean;
            messages_sum += m.total_messages as f64;
            broadcasts_sum += m.broadcasts as f64;
            transfers_sum += m.transfers_applied as f64;
            if verdicts.iter().all(|v| v.pass) {
                passes += 1;
            } else if first_failure.is_none() {
                first_failure = Some(format!("seed {seed}: {}", describe_failures(&verdicts, 0)));
            }
        }
    }
    let runs_f = runs.max(1) as f64;
    Ok(SweepSummary {
        scenario: scenario.name,
        runs,
        passes,
        pass_rate: passes as f64 / runs_f,
        exhaustive: exhaustive || matches!(scenario.policy, Policy::Exhaustive { .. }),
        latency_mean: latency_sum / runs_f,
        messages_mean: messages_sum / runs_f,
        broadcasts_mean: broadcasts_sum / runs_f,
        transfers_mean: transfers_sum / runs_f,
        first_failure,
    })
}

fn describe_failures(verdicts: &[VerdictLine], run: u64) -> String {
    let failing: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{}: {}", v.name, v.detail))
        .collect();
    if run > 0 {
        format!("run {run}: {}", failing.join("; "))
    } else {
        failing.join("; ")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub scenario: String,
    pub transfers: u64,
    pub broadcast_messages: u64,
    pub broadcast_per_transfer: f64,
    pub baseline_messages: u64,
    pub baseline_per_transfer: f64,
    pub ratio: f64,
    pub broadcast_all_pass: bool,
    pub baseline_all_pass: bool,
}

/// `baseline` command: the same script through the broadcast protocol and
/// through a total-order sequencer, message bills side by side.
pub fn cmd_baseline(scenario_ref: &str, seed: u64) -> Result<BaselineReport, RunnerError> {
    let scenario = load_scenario(scenario_ref)?;
    if scenario.model != Model::MessagePassing {
        return Err(RunnerError::Config(
            "baseline comparison needs a message-passing scenario".to_string(),
        ));
    }
    let mut broadcast_side = scenario.clone();
    broadcast_side.algorithm = Algorithm::BroadcastTransfer;
    let mut baseline_side = scenario.clone();
    baseline_side.algorithm = Algorithm::SequencerBaseline;
    if baseline_side.sequencer.is_none() {
        baseline_side.sequencer = baseline_side.correct().first().copied();
    }

    let run_one = |sc: &Scenario| -> Result<(Metrics, bool), RunnerError> {
        let sys = build_system(sc)?;
        let trace = engine::run(
            sys,
            &sc.policy,
            seed,
            &sc.faults,
            sc.options.step_bound,
            &sc.name,
        )?;
        let verdicts = evaluate(sc, &trace, CheckMode::MonitorsOnly);
        Ok((metrics::from_trace(&trace), verdicts.iter().all(|v| v.pass)))
    };
    let (bm, b_ok) = run_one(&broadcast_side)?;
    let (sm, s_ok) = run_one(&baseline_side)?;
    let transfers = bm.transfers_applied.max(1);
    let baseline_transfers = sm.transfers_applied.max(1);
    let broadcast_per = bm.total_messages as f64 / transfers as f64;
    let baseline_per = sm.total_messages as f64 / baseline_transfers as f64;
    Ok(BaselineReport {
        scenario: scenario.name,
        transfers: bm.transfers_applied,
        broadcast_messages: bm.total_messages,
        broadcast_per_transfer: broadcast_per,
        baseline_messages: sm.total_messages,
        baseline_per_transfer: baseline_per,
        ratio: if broadcast_per > 0.0 {
            baseline_per / broadcast_per
        } else {
            0.0
        },
        broadcast_all_pass: b_ok,
        baseline_all_pass: s_ok,
    })
}

/// Expected wire messages per broadcast in fault-free quorum runs:
/// send + acks + certs + readys.
pub fn quorum_messages_per_broadcast(n: u64) -> u64 {
    n * n + 3 * n
}

/// True when responses recorded for an op id say it succeeded.
pub fn op_succeeded(trace: &Trace, pid: Pid, index: usize) -> bool {
    trace.events.iter().any(|e| {
        matches!(
            &e.kind,
            EventKind::Respond { op, response: Response::Bool(true), .. }
                if op.pid == pid && op.index == index
        )
    })
}
