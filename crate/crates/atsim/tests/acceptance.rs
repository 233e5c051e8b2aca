//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them all).

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atsim::checker::{
    check_linearizable, check_relaxed, monitors, History, MonitorCtx, OpSpan, RelaxedMode,
    SearchLimits,
};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response};
use atsim::metrics;
use atsim::runner;
use atsim::shm::{SharedTransferSystem, SnapshotTransferSystem, TransferConsensusSystem};
use atsim::sim::engine::{enumerate, run, Policy};
use atsim::sim::trace::{EventKind, OpId, Outcome, Trace};
use atsim::sim::{FaultPlan, InjectedBug, Scenario};

fn criterion(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} ({name}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn within(start: Instant, budget: Duration, what: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

fn transfer(from: u32, to: u32, x: u64) -> Operation {
    Operation::Transfer {
        from: AccountId(from),
        to: AccountId(to),
        amount: Amount(x),
    }
}

fn read(a: u32) -> Operation {
    Operation::Read {
        account: AccountId(a),
    }
}

fn world(balances: &[(u32, u64, &[u32])]) -> (LedgerState, OwnershipMap) {
    let q0 = LedgerState::new(
        balances
            .iter()
            .map(|&(a, x, _)| (AccountId(a), Amount(x))),
    );
    let mut mu = OwnershipMap::new();
    for &(a, _, owners) in balances {
        mu.set_owners(AccountId(a), owners.iter().map(|&p| Pid(p)));
    }
    (q0, mu)
}

fn check_trace_linearizable(trace: &Trace, q0: &LedgerState, mu: &OwnershipMap) -> bool {
    let history = History::from_trace(trace);
    check_linearizable(&history, q0, mu, &SearchLimits::default())
        .map(|v| v.pass)
        .unwrap_or(false)
}

// ---------------------------------------------------------------------
// Criterion 1: single-owner snapshot algorithm is linearizable, on every
// interleaving of small worlds and on 1000 random schedules at N=4.
// ---------------------------------------------------------------------
#[test]
fn criterion_1_snapshot_transfer_linearizability() {
    let start = Instant::now();

    // 2 processes x 3 operations, exhaustive.
    let (q0, mu) = world(&[(1, 5, &[1]), (2, 3, &[2])]);
    let mut scripts = BTreeMap::new();
    scripts.insert(Pid(1), vec![transfer(1, 2, 4), read(2), transfer(1, 2, 4)]);
    scripts.insert(Pid(2), vec![transfer(2, 1, 3), transfer(2, 1, 3), read(1)]);
    let sys = SnapshotTransferSystem::new(2, q0.clone(), mu.clone(), &scripts);
    let mut two_by_three = 0u64;
    for trace in enumerate(sys, &FaultPlan::default(), 24, "c1-2x3").unwrap() {
        two_by_three += 1;
        assert!(
            check_trace_linearizable(&trace, &q0, &mu),
            "2x3 interleaving {two_by_three} not linearizable"
        );
    }

    // 3 processes x 2 operations, exhaustive.
    let (q0, mu) = world(&[(1, 5, &[1]), (2, 3, &[2]), (3, 1, &[3])]);
    let mut scripts = BTreeMap::new();
    scripts.insert(Pid(1), vec![transfer(1, 2, 4), read(2)]);
    scripts.insert(Pid(2), vec![transfer(2, 3, 3), transfer(2, 1, 2)]);
    scripts.insert(Pid(3), vec![transfer(3, 1, 1), read(3)]);
    let sys = SnapshotTransferSystem::new(3, q0.clone(), mu.clone(), &scripts);
    let mut three_by_two = 0u64;
    for trace in enumerate(sys, &FaultPlan::default(), 24, "c1-3x2").unwrap() {
        three_by_two += 1;
        assert!(
            check_trace_linearizable(&trace, &q0, &mu),
            "3x2 interleaving {three_by_two} not linearizable"
        );
    }

    // 1000 random fair schedules at N=4, 12 operations per schedule.
    let (q0, mu) = world(&[(1, 6, &[1]), (2, 4, &[2]), (3, 2, &[3]), (4, 0, &[4])]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut random_runs = 0u64;
    for seed in 0..1000u64 {
        let mut scripts = BTreeMap::new();
        for p in 1..=4u32 {
            let mut ops = Vec::new();
            for _ in 0..3 {
                if rng.random_bool(0.75) {
                    let from = p; // owners debit their own account
                    let to = rng.random_range(1..=4);
                    let amount = rng.random_range(0..=5);
                    ops.push(transfer(from, to, amount));
                } else {
                    ops.push(read(rng.random_range(1..=4)));
                }
            }
            scripts.insert(Pid(p), ops);
        }
        let sys = SnapshotTransferSystem::new(4, q0.clone(), mu.clone(), &scripts);
        let trace = run(
            sys,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            10_000,
            "c1-random",
        )
        .unwrap();
        assert_eq!(trace.outcome, Outcome::Quiescent);
        assert!(
            check_trace_linearizable(&trace, &q0, &mu),
            "random schedule seed {seed} not linearizable"
        );
        random_runs += 1;
    }

    within(start, Duration::from_secs(60), "criterion 1");
    criterion(
        1,
        "snapshot transfer linearizability",
        two_by_three > 0 && three_by_two > 0 && random_runs == 1000,
        &format!(
            "{two_by_three} + {three_by_two} interleavings and {random_runs} random schedules all linearizable"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: consensus from one shared account. Exhaustive at k=2,
// sampled at k=3; agreement, validity, termination, and the remaining
// balance always identifies the winner.
// ---------------------------------------------------------------------
#[test]
fn criterion_2_consensus_from_shared_account() {
    let start = Instant::now();
    let proposals_k2 = [(Pid(1), 101u64), (Pid(2), 202)];
    let proposals_k3 = [(Pid(1), 101u64), (Pid(2), 202), (Pid(3), 303)];

    let check = |trace: &Trace, proposals: &[(Pid, u64)], participants: usize| -> bool {
        let decisions: Vec<(u64, u64)> = trace
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ConsDecide {
                    value,
                    winner_balance,
                    ..
                } => Some((value, winner_balance)),
                _ => None,
            })
            .collect();
        let termination = decisions.len() == participants;
        let agreement = decisions.windows(2).all(|w| w[0].0 == w[1].0);
        let validity = decisions
            .iter()
            .all(|(v, _)| proposals.iter().any(|(_, pv)| pv == v));
        // balance = q: the winner's proposal is the decided value.
        let winner = decisions.iter().all(|(v, balance)| {
            proposals
                .iter()
                .any(|(p, pv)| u64::from(p.0) == *balance && pv == v)
        });
        termination && agreement && validity && winner
    };

    let sys = TransferConsensusSystem::new(&proposals_k2).unwrap();
    let mut interleavings = 0u64;
    for trace in enumerate(sys, &FaultPlan::default(), 16, "c2-k2").unwrap() {
        interleavings += 1;
        assert!(
            check(&trace, &proposals_k2, 2),
            "k=2 interleaving {interleavings} violated consensus"
        );
    }

    let mut sampled = 0u64;
    for seed in 0..1000u64 {
        let sys = TransferConsensusSystem::new(&proposals_k3).unwrap();
        let trace = run(
            sys,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            1000,
            "c2-k3",
        )
        .unwrap();
        assert!(check(&trace, &proposals_k3, 3), "k=3 seed {seed} failed");
        sampled += 1;
    }

    within(start, Duration::from_secs(30), "criterion 2");
    criterion(
        2,
        "consensus from a shared account",
        interleavings == 70 && sampled == 1000,
        &format!("{interleavings}/{interleavings} interleavings and {sampled} seeds pass; balance always names the winner"),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: k-shared transfer over consensus rounds. 1000 random
// contended schedules at k=2 and k=3: histories linearizable and no
// consensus object sees more than k proposals.
// ---------------------------------------------------------------------
#[test]
fn criterion_3_shared_transfer_contention() {
    let start = Instant::now();
    let mut runs = 0u64;

    // k = 2: two owners contend over a balance that funds only one of
    // them, with money arriving mid-flight from a third account.
    let (q0, mu) = world(&[(1, 5, &[1, 2]), (2, 3, &[3]), (3, 0, &[])]);
    let mut scripts = BTreeMap::new();
    scripts.insert(Pid(1), vec![transfer(1, 3, 4), transfer(1, 3, 2)]);
    scripts.insert(Pid(2), vec![transfer(1, 3, 4), read(1)]);
    scripts.insert(Pid(3), vec![transfer(2, 1, 3)]);
    for seed in 0..1000u64 {
        let sys = SharedTransferSystem::new(3, q0.clone(), mu.clone(), &scripts);
        let trace = run(
            sys,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            10_000,
            "c3-k2",
        )
        .unwrap();
        assert_eq!(trace.outcome, Outcome::Quiescent);
        let ctx = MonitorCtx {
            q0: q0.clone(),
            mu: mu.clone(),
            benign: (1..=3).map(Pid).collect(),
            correct: (1..=3).map(Pid).collect(),
            quiescent: true,
            per_account_sequencing: false,
        };
        let violations = monitors(&trace, &ctx);
        assert!(violations.is_empty(), "k=2 seed {seed}: {violations:?}");
        assert!(
            check_trace_linearizable(&trace, &q0, &mu),
            "k=2 seed {seed} not linearizable"
        );
        runs += 1;
    }

    // k = 3: three owners contend.
    let (q0, mu) = world(&[(1, 6, &[1, 2, 3]), (2, 4, &[4]), (3, 0, &[])]);
    let mut scripts = BTreeMap::new();
    scripts.insert(Pid(1), vec![transfer(1, 3, 3), read(1)]);
    scripts.insert(Pid(2), vec![transfer(1, 3, 3)]);
    scripts.insert(Pid(3), vec![transfer(1, 3, 3)]);
    scripts.insert(Pid(4), vec![transfer(2, 1, 4)]);
    for seed in 0..1000u64 {
        let sys = SharedTransferSystem::new(4, q0.clone(), mu.clone(), &scripts);
        let trace = run(
            sys,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            10_000,
            "c3-k3",
        )
        .unwrap();
        assert_eq!(trace.outcome, Outcome::Quiescent);
        // Consensus objects stay within capacity (the monitor would flag
        // any KcPropose event past it).
        for event in &trace.events {
            if let EventKind::KcPropose {
                invocations,
                capacity,
                ..
            } = event.kind
            {
                assert!(invocations <= capacity, "k=3 seed {seed}: over-invoked");
            }
        }
        assert!(
            check_trace_linearizable(&trace, &q0, &mu),
            "k=3 seed {seed} not linearizable"
        );
        runs += 1;
    }

    within(start, Duration::from_secs(120), "criterion 3");
    criterion(
        3,
        "k-shared transfer under contention",
        runs == 2000,
        &format!("{runs} contended schedules linearizable, consensus capacity respected"),
    );
}

// ---------------------------------------------------------------------
// Criterion 4: the broadcast protocol under double-spend and equivocation
// attacks at N=7, f=2: relaxed correctness holds, monitors stay silent,
// and no benign node applies two records for one (source, seq) slot,
// over 500 seeds.
// ---------------------------------------------------------------------
#[test]
fn criterion_4_byzantine_double_spend() {
    let start = Instant::now();
    let scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
    let q0 = scenario.q0();
    let mu = scenario.ownership();
    let correct: BTreeSet<Pid> = scenario.correct().into_iter().collect();
    let mut runs = 0u64;
    for seed in 0..500u64 {
        let trace = run_scenario(&scenario, seed);
        assert_eq!(trace.outcome, Outcome::Quiescent, "seed {seed}");
        let ctx = MonitorCtx {
            q0: q0.clone(),
            mu: mu.clone(),
            benign: scenario.benign().into_iter().collect(),
            correct: correct.clone(),
            quiescent: true,
            per_account_sequencing: true,
        };
        let violations = monitors(&trace, &ctx);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        let report = check_relaxed(
            &trace,
            &q0,
            &mu,
            &correct,
            RelaxedMode::TransfersAndOwnOps,
            &SearchLimits::default(),
        )
        .unwrap();
        assert!(report.pass, "seed {seed}: {}", report.detail);
        assert_no_conflicting_slots(&trace);
        runs += 1;
    }
    within(start, Duration::from_secs(300), "criterion 4");
    criterion(
        4,
        "double-spend containment at N=7 f=2",
        runs == 500,
        &format!("{runs}/500 adversarial runs pass relaxed correctness with silent monitors"),
    );
}

fn run_scenario(scenario: &Scenario, seed: u64) -> Trace {
    let sys = runner::build_system(scenario).unwrap();
    run(
        sys,
        &scenario.policy,
        seed,
        &scenario.faults,
        scenario.options.step_bound,
        &scenario.name,
    )
    .unwrap()
}

fn assert_no_conflicting_slots(trace: &Trace) {
    let mut per_node: BTreeMap<(Pid, AccountId, u64), atsim::ledger::TransferRecord> =
        BTreeMap::new();
    for event in &trace.events {
        if let EventKind::Apply { record, .. } = &event.kind {
            let key = (event.node, record.source, record.uid.1);
            if let Some(prior) = per_node.insert(key, *record) {
                assert_eq!(
                    prior, *record,
                    "{} applied two records for {}/{}",
                    event.node, record.source, record.uid.1
                );
            }
        }
    }
}

// ---------------------------------------------------------------------
// Criterion 5: liveness. Fault-free and crash-only runs at criterion-4
// scale: every operation by a process that stays correct completes.
// ---------------------------------------------------------------------
#[test]
fn criterion_5_liveness_under_crashes() {
    let start = Instant::now();
    let mut scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
    // Same scale, no malice: give the former adversaries honest scripts.
    scenario.faults.byzantine.clear();
    scenario
        .scripts
        .insert(Pid(6), vec![transfer(6, 1, 4), read(6)]);
    scenario.scripts.insert(Pid(7), vec![transfer(7, 2, 3)]);

    let mut runs = 0u64;
    for seed in 0..150u64 {
        // Fault-free.
        let trace = run_scenario(&scenario, seed);
        assert!(all_correct_ops_complete(&scenario, &trace), "seed {seed}");
        runs += 1;
        // Crash-only: two processes die mid-run.
        let mut crashing = scenario.clone();
        crashing.faults.crashes.insert(Pid(6), 40 + seed % 60);
        crashing.faults.crashes.insert(Pid(2), 90 + seed % 40);
        let trace = run_scenario(&crashing, seed);
        assert!(
            all_correct_ops_complete(&crashing, &trace),
            "crash-only seed {seed}"
        );
        runs += 1;
    }
    within(start, Duration::from_secs(120), "criterion 5");
    criterion(
        5,
        "liveness in fault-free and crash-only runs",
        runs == 300,
        &format!("{runs} fair runs, all correct-process operations completed"),
    );
}

fn all_correct_ops_complete(scenario: &Scenario, trace: &Trace) -> bool {
    if trace.outcome != Outcome::Quiescent {
        return false;
    }
    let correct: BTreeSet<Pid> = scenario.correct().into_iter().collect();
    let mut open: BTreeSet<OpId> = BTreeSet::new();
    for event in &trace.events {
        match &event.kind {
            EventKind::Invoke { op, .. } if correct.contains(&op.pid) => {
                open.insert(*op);
            }
            EventKind::Respond { op, .. } => {
                open.remove(op);
            }
            _ => {}
        }
    }
    open.is_empty()
}

// ---------------------------------------------------------------------
// Criterion 6: compromised shared account. All owners byzantine with an
// equivocating sequence service: benign nodes never validate two spends
// of one slot, and healthy accounts keep completing transfers.
// ---------------------------------------------------------------------
#[test]
fn criterion_6_compromised_account_containment() {
    let start = Instant::now();
    let scenario = runner::load_scenario("k7_compromised_account").unwrap();
    let shared = AccountId(8);
    let mut runs = 0u64;
    for seed in 0..200u64 {
        let trace = run_scenario(&scenario, seed);
        assert_eq!(trace.outcome, Outcome::Quiescent, "seed {seed}");
        assert_no_conflicting_slots(&trace);
        // At most one record per compromised-account slot across all
        // benign nodes together.
        let mut slot_records: BTreeMap<u64, atsim::ledger::TransferRecord> = BTreeMap::new();
        for event in &trace.events {
            if let EventKind::Apply { record, .. } = &event.kind {
                if record.source == shared {
                    if let Some(prior) = slot_records.insert(record.uid.1, *record) {
                        assert_eq!(prior, *record, "seed {seed}: double spend validated");
                    }
                }
            }
        }
        // Healthy accounts unaffected: every correct process finished its
        // whole script.
        assert!(
            all_correct_ops_complete(&scenario, &trace),
            "seed {seed}: healthy accounts were affected"
        );
        runs += 1;
    }
    within(start, Duration::from_secs(120), "criterion 6");
    criterion(
        6,
        "compromised account cannot double spend",
        runs == 200,
        &format!("{runs}/200 runs: zero double spends, healthy accounts completed"),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: message accounting. Idealized mode: one broadcast per
// attempted-successful transfer. Quorum mode at N=10: the wire bill per
// transfer is exactly send + acks + certs + readys. Baseline report
// generated.
// ---------------------------------------------------------------------
#[test]
fn criterion_7_message_accounting() {
    let start = Instant::now();

    // Idealized: fig4_fairN4 completes 8 transfers with 8 broadcasts.
    let scenario = runner::load_scenario("fig4_fairN4").unwrap();
    let trace = run_scenario(&scenario, 11);
    let m = metrics::from_trace(&trace);
    let successful_transfers = trace
        .events
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::Respond {
                    operation: Operation::Transfer { .. },
                    response: Response::Bool(true),
                    ..
                }
            )
        })
        .count() as u64;
    assert_eq!(successful_transfers, 8);
    assert_eq!(
        m.broadcasts, successful_transfers,
        "idealized mode must invoke broadcast exactly once per attempted-successful transfer"
    );

    // Quorum at N=10: exact analytic bill.
    let scenario = runner::load_scenario("baseline_compare").unwrap();
    let n = u64::from(scenario.n);
    let trace = run_scenario(&scenario, 11);
    assert_eq!(trace.outcome, Outcome::Quiescent);
    let m = metrics::from_trace(&trace);
    assert_eq!(m.broadcasts, 20);
    let analytic = m.broadcasts * runner::quorum_messages_per_broadcast(n);
    assert_eq!(
        m.total_messages, analytic,
        "quorum wire bill must match send + n acks + n certs + n^2 readys exactly"
    );

    // Baseline comparison report.
    let report = runner::cmd_baseline("baseline_compare", 11).unwrap();
    assert!(report.broadcast_all_pass && report.baseline_all_pass);
    assert_eq!(report.broadcast_messages, analytic);
    assert!(report.baseline_messages > 0);

    within(start, Duration::from_secs(60), "criterion 7");
    criterion(
        7,
        "message accounting",
        true,
        &format!(
            "idealized: 1 broadcast/transfer; quorum N=10: {} msgs = 20 x {}; baseline ratio {:.2}",
            m.total_messages,
            runner::quorum_messages_per_broadcast(n),
            report.ratio
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: checker self-validation. The search agrees with a
// brute-force permutation oracle on 10,000 random histories, and the two
// validation mutations are each caught by a criterion-4 scenario.
// ---------------------------------------------------------------------
#[test]
fn criterion_8_checker_self_validation() {
    let start = Instant::now();
    let (q0, mu) = world(&[(1, 5, &[1]), (2, 3, &[2]), (3, 2, &[3])]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let mut agreements = 0u64;
    for case in 0..10_000u64 {
        let history = random_history(&mut rng, &q0);
        let verdict =
            check_linearizable(&history, &q0, &mu, &SearchLimits::default()).unwrap();
        let expected = oracle_linearizable(&history, &q0, &mu);
        assert_eq!(
            verdict.pass, expected,
            "case {case}: checker {} but oracle {} for {history:?}",
            verdict.pass, expected
        );
        if verdict.pass {
            let witness = verdict.witness.expect("pass carries a witness");
            assert!(
                atsim::ledger::replay_legal(&witness, &q0, &mu),
                "case {case}: witness does not replay"
            );
        } else {
            assert!(
                verdict.violating_prefix.is_some(),
                "case {case}: fail without a violating prefix"
            );
        }
        agreements += 1;
    }

    // Mutations: a validator that skips the balance check or the sequence
    // check must be caught by the adversarial scenario.
    let mut caught = 0;
    for bug in [InjectedBug::SkipBalanceCheck, InjectedBug::SkipSeqCheck] {
        let mut scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
        scenario.options.injected_bug = Some(bug);
        let trace = run_scenario(&scenario, 3);
        let ctx = MonitorCtx {
            q0: scenario.q0(),
            mu: scenario.ownership(),
            benign: scenario.benign().into_iter().collect(),
            correct: scenario.correct().into_iter().collect(),
            quiescent: trace.outcome == Outcome::Quiescent,
            per_account_sequencing: true,
        };
        let violations = monitors(&trace, &ctx);
        assert!(
            !violations.is_empty(),
            "{bug:?} was not caught by the monitors"
        );
        caught += 1;
    }

    within(start, Duration::from_secs(120), "criterion 8");
    criterion(
        8,
        "checker agrees with brute force",
        agreements == 10_000 && caught == 2,
        &format!("{agreements}/10000 histories agree; both validation mutations caught"),
    );
}

// Random history generator: up to 3 sequential processes, 8 operations,
// some pending. Half the histories carry protocol-plausible responses,
// half carry arbitrary ones.
fn random_history(rng: &mut ChaCha8Rng, q0: &LedgerState) -> History {
    let procs = rng.random_range(1..=3u32);
    let total = rng.random_range(1..=8usize);
    let mut spans: Vec<OpSpan> = Vec::new();
    let mut step = 0u64;
    let mut per_proc_open: BTreeMap<u32, usize> = BTreeMap::new();
    let mut index: BTreeMap<u32, usize> = BTreeMap::new();
    // Interleave invocation/response tokens; processes stay sequential.
    while spans.len() < total {
        let p = rng.random_range(1..=procs);
        if let Some(&open) = per_proc_open.get(&p) {
            // Close the open op.
            spans[open].respond_step = Some(step);
            per_proc_open.remove(&p);
        } else {
            let op = if rng.random_bool(0.7) {
                transfer(p, rng.random_range(1..=3), rng.random_range(0..=5))
            } else {
                read(rng.random_range(1..=3))
            };
            let idx = index.entry(p).or_insert(0);
            spans.push(OpSpan {
                id: OpId {
                    pid: Pid(p),
                    index: *idx,
                },
                pid: Pid(p),
                op,
                response: None,
                invoke_step: step,
                respond_step: None,
                visible_step: None,
            });
            *idx += 1;
            per_proc_open.insert(p, spans.len() - 1);
        }
        step += 1;
    }
    // Close most remaining ops; leave some pending.
    for (_, open) in per_proc_open {
        if rng.random_bool(0.6) {
            spans[open].respond_step = Some(step);
            step += 1;
        }
    }
    // Fill responses. Plausible mode replays a serialization; arbitrary
    // mode invents values.
    let plausible = rng.random_bool(0.5);
    let mut state = q0.clone();
    let mu = {
        let mut mu = OwnershipMap::new();
        for a in 1..=3 {
            mu.set_owners(AccountId(a), [Pid(a)]);
        }
        mu
    };
    for span in spans.iter_mut() {
        let responded = span.respond_step.is_some();
        if responded {
            let response = if plausible {
                match atsim::ledger::seq_step(&state, span.pid, span.op, &mu) {
                    Ok((next, response)) => {
                        state = next;
                        response
                    }
                    Err(_) => Response::Bool(false),
                }
            } else {
                match span.op {
                    Operation::Transfer { .. } => Response::Bool(rng.random_bool(0.7)),
                    Operation::Read { .. } => {
                        Response::Balance(Amount(rng.random_range(0..=8)))
                    }
                }
            };
            span.response = Some(response);
        } else if matches!(span.op, Operation::Transfer { .. }) && rng.random_bool(0.5) {
            span.visible_step = Some(span.invoke_step + 1);
        }
    }
    History { ops: spans }
}

// Independent oracle: enumerate completions (subsets of visible pending
// transfers, completed true) and all precedence-respecting permutations;
// accept if any replays under a freshly written interpreter.
fn oracle_linearizable(h: &History, q0: &LedgerState, mu: &OwnershipMap) -> bool {
    #[derive(Clone)]
    struct Cand {
        pid: Pid,
        op: Operation,
        response: Response,
        invoke: u64,
        respond: Option<u64>,
    }
    let mandatory: Vec<Cand> = h
        .ops
        .iter()
        .filter(|s| s.response.is_some())
        .map(|s| Cand {
            pid: s.pid,
            op: s.op,
            response: s.response.unwrap(),
            invoke: s.invoke_step,
            respond: s.respond_step,
        })
        .collect();
    let optional: Vec<Cand> = h
        .ops
        .iter()
        .filter(|s| {
            s.response.is_none()
                && s.visible_step.is_some()
                && matches!(s.op, Operation::Transfer { .. })
        })
        .map(|s| Cand {
            pid: s.pid,
            op: s.op,
            response: Response::Bool(true),
            invoke: s.invoke_step,
            respond: None,
        })
        .collect();

    fn apply(state: &mut BTreeMap<AccountId, i128>, c: &Cand, mu: &OwnershipMap) -> bool {
        match c.op {
            Operation::Transfer { from, to, amount } => {
                let (Some(&have), Some(_)) = (state.get(&from), state.get(&to)) else {
                    return false;
                };
                let ok = mu.owns(c.pid, from) && have >= i128::from(amount.0);
                if c.response != Response::Bool(ok) {
                    return false;
                }
                if ok && from != to {
                    *state.get_mut(&from).unwrap() -= i128::from(amount.0);
                    *state.get_mut(&to).unwrap() += i128::from(amount.0);
                }
                true
            }
            Operation::Read { account } => {
                let Some(&have) = state.get(&account) else {
                    return false;
                };
                c.response == Response::Balance(Amount(have.max(0) as u64))
                    && have >= 0
            }
        }
    }

    fn permute(
        remaining: &mut Vec<Cand>,
        state: &BTreeMap<AccountId, i128>,
        mu: &OwnershipMap,
    ) -> bool {
        if remaining.is_empty() {
            return true;
        }
        for i in 0..remaining.len() {
            // Respect precedence: nothing remaining may be required to
            // come before candidate i.
            let me_invoke = remaining[i].invoke;
            let blocked = remaining
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && other.respond.is_some_and(|r| r < me_invoke));
            if blocked {
                continue;
            }
            let cand = remaining.remove(i);
            let mut next = state.clone();
            if apply(&mut next, &cand, mu) && permute(remaining, &next, mu) {
                remaining.insert(i, cand);
                return true;
            }
            remaining.insert(i, cand);
        }
        false
    }

    let base: BTreeMap<AccountId, i128> = q0
        .accounts()
        .map(|a| (a, i128::from(q0.balance(a).unwrap().0)))
        .collect();
    // Try every subset of optional completions.
    for mask in 0..(1usize << optional.len()) {
        let mut cands = mandatory.clone();
        for (i, opt) in optional.iter().enumerate() {
            if mask & (1 << i) != 0 {
                cands.push(opt.clone());
            }
        }
        if permute(&mut cands, &base, mu) {
            return true;
        }
    }
    false
}
