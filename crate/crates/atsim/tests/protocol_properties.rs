//! Protocol-level properties beyond the acceptance gate: broadcast
//! equivalences, crash agreement, adversarial strategies, determinism,
//! and the relaxed-consistency corner cases.

use std::collections::{BTreeMap, BTreeSet};

use atsim::checker::{
    check_linearizable, check_relaxed, monitors, History, MonitorCtx, RelaxedMode, SearchLimits,
};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response};
use atsim::metrics;
use atsim::runner::{self, CheckMode};
use atsim::sim::engine::{enumerate, run, EventKey, Policy, System};
use atsim::sim::trace::{EventKind, Outcome, StreamId, Trace, TraceEvent, TraceSink};
use atsim::sim::{BroadcastMode, ByzStrategy, FaultPlan, Scenario, ServiceMode};

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

fn ctx_for(scenario: &Scenario, trace: &Trace) -> MonitorCtx {
    MonitorCtx {
        q0: scenario.q0(),
        mu: scenario.ownership(),
        benign: scenario.benign().into_iter().collect(),
        correct: scenario.correct().into_iter().collect(),
        quiescent: trace.outcome == Outcome::Quiescent,
        per_account_sequencing: true,
    }
}

/// Per-receiver, per-stream delivered slot sequences.
fn delivery_sequences(trace: &Trace) -> BTreeMap<(Pid, StreamId), Vec<u64>> {
    let mut out: BTreeMap<(Pid, StreamId), Vec<u64>> = BTreeMap::new();
    for event in &trace.events {
        if let EventKind::Deliver { stream, seq, .. } = &event.kind {
            out.entry((event.node, *stream)).or_default().push(*seq);
        }
    }
    out
}

/// Validated records per node (dependency sets vary with timing; the
/// records themselves do not).
fn applied_records(trace: &Trace) -> BTreeMap<Pid, BTreeSet<atsim::ledger::TransferRecord>> {
    let mut out: BTreeMap<Pid, BTreeSet<atsim::ledger::TransferRecord>> = BTreeMap::new();
    for event in &trace.events {
        if let EventKind::Apply { record, .. } = &event.kind {
            out.entry(event.node).or_default().insert(*record);
        }
    }
    out
}

#[test]
fn idealized_and_quorum_deliver_the_same_sets() {
    let base = runner::load_scenario("fig4_fairN4").unwrap();
    let mut quorum = base.clone();
    quorum.broadcast = BroadcastMode::Quorum { f: 1 };
    for seed in 0..20 {
        let ideal_trace = run_scenario(&base, seed);
        let quorum_trace = run_scenario(&quorum, seed);
        // Same per-source delivery sequences at every receiver (order
        // across different sources may differ), and the same validated
        // records everywhere.
        assert_eq!(
            delivery_sequences(&ideal_trace),
            delivery_sequences(&quorum_trace),
            "seed {seed}: delivery sequences diverge"
        );
        assert_eq!(
            applied_records(&ideal_trace),
            applied_records(&quorum_trace),
            "seed {seed}: validated records diverge"
        );
    }
}

#[test]
fn one_transfer_is_one_broadcast_invocation() {
    let mut scenario = runner::load_scenario("fig4_fairN4").unwrap();
    scenario.scripts = BTreeMap::from([(Pid(1), vec![Operation::Transfer {
        from: AccountId(1),
        to: AccountId(2),
        amount: Amount(1),
    }])]);
    let trace = run_scenario(&scenario, 5);
    let m = metrics::from_trace(&trace);
    assert_eq!(m.broadcasts, 1);
    assert_eq!(m.ops_completed, 1);
}

#[test]
fn sender_crash_mid_broadcast_is_all_or_none() {
    // N=4 quorum: p1 broadcasts one transfer and crashes at every possible
    // step; the remaining correct processes either all deliver or none do.
    let mut scenario = runner::load_scenario("fig4_fairN4").unwrap();
    scenario.broadcast = BroadcastMode::Quorum { f: 1 };
    scenario.scripts = BTreeMap::from([(Pid(1), vec![Operation::Transfer {
        from: AccountId(1),
        to: AccountId(2),
        amount: Amount(5),
    }])]);
    let mut outcomes = BTreeSet::new();
    for crash_step in 0..40 {
        let mut crashing = scenario.clone();
        crashing.faults.crashes.insert(Pid(1), crash_step);
        let trace = run_scenario(&crashing, 9);
        assert_eq!(trace.outcome, Outcome::Quiescent);
        let deliveries: BTreeSet<Pid> = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Deliver { .. }) && e.node != Pid(1))
            .map(|e| e.node)
            .collect();
        let all: BTreeSet<Pid> = [Pid(2), Pid(3), Pid(4)].into();
        assert!(
            deliveries.is_empty() || deliveries == all,
            "crash at {crash_step}: partial delivery {deliveries:?}"
        );
        outcomes.insert(deliveries.len());
    }
    // The sweep must actually hit both outcomes.
    assert!(outcomes.contains(&0) && outcomes.contains(&3));
}

#[test]
fn quorum_intersection_always_contains_a_benign_process() {
    // Combinatorial check at small n: any two >2n/3 subsets intersect in
    // more than f processes whenever n > 3f.
    for n in 1..=9u32 {
        let f = (n - 1) / 3;
        let quorum = (2 * n as usize) / 3 + 1;
        let members: Vec<u32> = (1..=n).collect();
        let subsets: Vec<BTreeSet<u32>> = (0u32..(1 << n))
            .filter(|mask| mask.count_ones() as usize == quorum)
            .map(|mask| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &p)| p)
                    .collect()
            })
            .collect();
        for a in &subsets {
            for b in &subsets {
                let inter = a.intersection(b).count();
                assert!(
                    inter > f as usize,
                    "n={n}: quorums intersect in only {inter} <= f={f}"
                );
            }
        }
    }
}

#[test]
fn shared_account_with_correct_service_orders_both_transfers() {
    // Three owners of one account; two of them transfer concurrently. The
    // service hands out 1 and 2, and every benign node applies both in
    // order.
    let scenario_json = r#"{
        "name": "shared_correct", "n": 4,
        "accounts": [
            {"id": 1, "balance": 12, "owners": [1, 2, 3], "service": "correct"},
            {"id": 2, "balance": 0, "owners": [4]}
        ],
        "model": "message_passing", "algorithm": "broadcast_transfer",
        "scripts": {
            "1": [{"transfer": {"from": 1, "to": 2, "amount": 4}}],
            "2": [{"transfer": {"from": 1, "to": 2, "amount": 5}}]
        },
        "policy": {"fair_random": {}},
        "broadcast": {"quorum": {"f": 1}}
    }"#;
    let scenario = Scenario::from_json(scenario_json).unwrap();
    for seed in 0..50 {
        let trace = run_scenario(&scenario, seed);
        assert_eq!(trace.outcome, Outcome::Quiescent, "seed {seed}");
        let violations = monitors(&trace, &ctx_for(&scenario, &trace));
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        // Both transfers validated at every node, in sequence order.
        for node in 1..=4u32 {
            let seqs: Vec<u64> = trace
                .events
                .iter()
                .filter(|e| e.node == Pid(node))
                .filter_map(|e| match &e.kind {
                    EventKind::Apply { record, .. } if record.source == AccountId(1) => {
                        Some(record.uid.1)
                    }
                    _ => None,
                })
                .collect();
            assert_eq!(seqs, vec![1, 2], "seed {seed} node {node}");
        }
        // Both invokers completed.
        let m = metrics::from_trace(&trace);
        assert_eq!(m.ops_completed, 2, "seed {seed}");
    }
}

#[test]
fn stalled_service_hangs_only_that_account() {
    let scenario_json = r#"{
        "name": "stalled_service", "n": 4,
        "accounts": [
            {"id": 1, "balance": 12, "owners": [1, 2], "service": "stalled"},
            {"id": 3, "balance": 5, "owners": [3]},
            {"id": 4, "balance": 5, "owners": [4]}
        ],
        "model": "message_passing", "algorithm": "broadcast_transfer",
        "scripts": {
            "1": [{"transfer": {"from": 1, "to": 3, "amount": 4}}],
            "3": [{"transfer": {"from": 3, "to": 4, "amount": 2}}, {"read": {"account": 3}}],
            "4": [{"transfer": {"from": 4, "to": 3, "amount": 1}}]
        },
        "policy": {"fair_random": {}},
        "broadcast": "idealized"
    }"#;
    let scenario = Scenario::from_json(scenario_json).unwrap();
    let trace = run_scenario(&scenario, 13);
    assert_eq!(trace.outcome, Outcome::Quiescent);
    let m = metrics::from_trace(&trace);
    // p1's transfer hangs waiting for a number; everything else finishes.
    assert_eq!(m.ops_stalled, 1);
    assert_eq!(m.ops_completed, 3);
    let violations = monitors(&trace, &ctx_for(&scenario, &trace));
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn raw_channels_let_equivocation_violate_source_order() {
    // Negative control: with unprotected channels, the equivocating node
    // makes benign receivers deliver different content for one slot.
    let mut scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
    scenario.broadcast = BroadcastMode::Raw;
    let mut caught = false;
    for seed in 0..10 {
        let trace = run_scenario(&scenario, seed);
        let violations = monitors(&trace, &ctx_for(&scenario, &trace));
        if violations
            .iter()
            .any(|v| v.kind == "source_order_content" || v.kind == "source_order")
        {
            caught = true;
            break;
        }
    }
    assert!(caught, "raw-mode equivocation was never detected");
}

#[test]
fn forged_ownership_is_rejected_and_counted() {
    let mut scenario = runner::load_scenario("fig4_fairN4").unwrap();
    scenario.faults.byzantine.insert(Pid(4), ByzStrategy::ForgeOwner);
    scenario.scripts.insert(
        Pid(4),
        vec![Operation::Transfer {
            from: AccountId(4),
            to: AccountId(2),
            amount: Amount(1),
        }],
    );
    scenario.broadcast = BroadcastMode::Quorum { f: 1 };
    let trace = run_scenario(&scenario, 21);
    let violations = monitors(&trace, &ctx_for(&scenario, &trace));
    assert!(violations.is_empty(), "{violations:?}");
    let m = metrics::from_trace(&trace);
    assert!(
        m.rejected_forgeries >= 1,
        "forgery attempts should be counted"
    );
    // The victim's account is untouched by the forgery.
    for event in &trace.events {
        if let EventKind::Apply { record, .. } = &event.kind {
            assert_ne!(record.issuer, Pid(4));
        }
    }
}

#[test]
fn bad_seq_and_stale_deps_attacks_change_no_balances() {
    for strategy in [ByzStrategy::BadSeq, ByzStrategy::StaleDeps, ByzStrategy::Silent] {
        let mut scenario = runner::load_scenario("fig4_fairN4").unwrap();
        scenario.broadcast = BroadcastMode::Quorum { f: 1 };
        scenario.faults.byzantine.insert(Pid(4), strategy);
        scenario.scripts.insert(
            Pid(4),
            vec![Operation::Transfer {
                from: AccountId(4),
                to: AccountId(2),
                amount: Amount(3),
            }],
        );
        let trace = run_scenario(&scenario, 31);
        let violations = monitors(&trace, &ctx_for(&scenario, &trace));
        assert!(violations.is_empty(), "{strategy:?}: {violations:?}");
        // No transfer out of the adversary's account is ever applied.
        for event in &trace.events {
            if let EventKind::Apply { record, .. } = &event.kind {
                assert_ne!(record.source, AccountId(4), "{strategy:?} got applied");
            }
        }
    }
}

#[test]
fn stale_own_read_passes_relaxed_but_not_linearizability() {
    // p2 pays p1; p2 completes. p1 then reads its own account before the
    // delivery reaches it: the read is stale in real time. Drive the
    // schedule by hand: deliver p2's broadcast to p2 first, invoke p1's
    // read, then let everything else flow.
    let scenario_json = r#"{
        "name": "stale_read", "n": 2,
        "accounts": [
            {"id": 1, "balance": 0, "owners": [1]},
            {"id": 2, "balance": 10, "owners": [2]}
        ],
        "model": "message_passing", "algorithm": "broadcast_transfer",
        "scripts": {
            "1": [{"read": {"account": 1}}],
            "2": [{"transfer": {"from": 2, "to": 1, "amount": 7}}]
        },
        "policy": {"fair_random": {}},
        "broadcast": "idealized"
    }"#;
    let scenario = Scenario::from_json(scenario_json).unwrap();
    let mut sys = runner::build_system(&scenario).unwrap();
    let mut sink = TraceSink::new();
    // p2 invokes its transfer (broadcast fans out).
    sys.step(EventKey::Proc(Pid(2)), &mut sink);
    // Deliver p2's own copy: the transfer completes at p2.
    let to_p2 = sys
        .enabled()
        .into_iter()
        .find(|k| matches!(k, EventKey::Deliver(_)))
        .expect("oracle items in flight");
    // Deliver messages until p2's op completes, leaving p1's copy last.
    let mut keys = sys.enabled();
    keys.retain(|k| matches!(k, EventKey::Deliver(_)));
    // The network holds one oracle item per receiver; find p2's by trying
    // the second one first (ids are allocation-ordered: p1 then p2).
    let _ = to_p2;
    if let Some(&second) = keys.get(1) {
        sys.step(second, &mut sink);
    }
    // p1 now reads: stale, returns 0.
    sys.step(EventKey::Proc(Pid(1)), &mut sink);
    // Drain the rest fairly.
    let mut guard = 0;
    while !sys.enabled().is_empty() && guard < 1000 {
        let key = sys.enabled()[0];
        sys.step(key, &mut sink);
        guard += 1;
    }
    let trace = sink.into_trace("stale_read", 0, Outcome::Quiescent, guard);

    // The stale read violates real-time linearizability of the full
    // history...
    let q0 = scenario.q0();
    let mu = scenario.ownership();
    let full = History::from_trace(&trace);
    let read_response = full
        .ops
        .iter()
        .find(|s| s.pid == Pid(1))
        .and_then(|s| s.response);
    assert_eq!(read_response, Some(Response::Balance(Amount(0))));
    let strict = check_linearizable(&full, &q0, &mu, &SearchLimits::default()).unwrap();
    assert!(
        !strict.pass,
        "a read that misses a completed incoming transfer is not linearizable"
    );
    // ...but the relaxed check accepts it: reads are only sequentially
    // consistent.
    let correct: BTreeSet<Pid> = [Pid(1), Pid(2)].into();
    let report = check_relaxed(
        &trace,
        &q0,
        &mu,
        &correct,
        RelaxedMode::TransfersAndOwnOps,
        &SearchLimits::default(),
    )
    .unwrap();
    assert!(report.pass, "{}", report.detail);
    // The strict variant that pins foreign reads also passes here: there
    // is a legal order with the read before the transfer.
    let report = check_relaxed(
        &trace,
        &q0,
        &mu,
        &correct,
        RelaxedMode::WithForeignReads,
        &SearchLimits::default(),
    )
    .unwrap();
    assert!(report.pass, "{}", report.detail);
}

#[test]
fn strict_balance_variant_strands_dep_funded_transfers() {
    // With the dependency-exclusive balance check, a transfer funded by
    // its own dependency set never validates; safety holds, liveness is
    // lost for that op.
    let scenario_json = r#"{
        "name": "strict_variant", "n": 3,
        "accounts": [
            {"id": 1, "balance": 10, "owners": [1]},
            {"id": 2, "balance": 0, "owners": [2]},
            {"id": 3, "balance": 0, "owners": [3]}
        ],
        "model": "message_passing", "algorithm": "broadcast_transfer",
        "scripts": {
            "1": [{"transfer": {"from": 1, "to": 2, "amount": 8}}],
            "2": [{"transfer": {"from": 2, "to": 3, "amount": 6}}]
        },
        "policy": {"fair_random": {}},
        "broadcast": "idealized",
        "options": {"validation_balance_includes_deps": false}
    }"#;
    let scenario = Scenario::from_json(scenario_json).unwrap();
    // Find a seed where p2's transfer happens after it saw p1's money (so
    // the dependency set is what funds it).
    let mut stranded = false;
    for seed in 0..40 {
        let trace = run_scenario(&scenario, seed);
        let m = metrics::from_trace(&trace);
        let violations = monitors(&trace, &ctx_for(&scenario, &trace));
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        if m.ops_stalled > 0 {
            stranded = true;
            // The dep-funded transfer is buffered, not applied.
            assert!(m.stuck_buffered > 0);
            break;
        }
    }
    assert!(
        stranded,
        "the strict variant should strand a dependency-funded transfer"
    );
    // The default variant clears the same script.
    let mut relaxed = scenario.clone();
    relaxed.options.validation_balance_includes_deps = true;
    for seed in 0..40 {
        let trace = run_scenario(&relaxed, seed);
        let m = metrics::from_trace(&trace);
        assert_eq!(m.ops_stalled, 0, "seed {seed}");
    }
}

#[test]
fn traces_are_reproducible_byte_for_byte() {
    for name in ["fig1_basic", "fig3_two_owners", "fig4_byz_doublespend_N7f2"] {
        let scenario = runner::load_scenario(name).unwrap();
        let a = run_scenario(&scenario, 1234);
        let b = run_scenario(&scenario, 1234);
        assert_eq!(a.to_jsonl(), b.to_jsonl(), "{name} diverged");
        let c = run_scenario(&scenario, 1235);
        assert_ne!(
            a.to_jsonl(),
            c.to_jsonl(),
            "{name}: different seeds should differ"
        );
    }
}

#[test]
fn monitors_are_pure() {
    let scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
    let trace = run_scenario(&scenario, 77);
    let ctx = ctx_for(&scenario, &trace);
    let first = monitors(&trace, &ctx);
    let second = monitors(&trace, &ctx);
    assert_eq!(first, second);
}

#[test]
fn sequencer_crash_stalls_baseline_but_not_broadcast_protocol() {
    let mut scenario = runner::load_scenario("baseline_compare").unwrap();
    scenario.faults.crashes.insert(Pid(1), 5);
    // Broadcast protocol: everyone except the crashed node finishes.
    let trace = run_scenario(&scenario, 17);
    assert_eq!(trace.outcome, Outcome::Quiescent);
    let correct_ops_done = {
        let correct: BTreeSet<Pid> = scenario.correct().into_iter().collect();
        let mut open = BTreeSet::new();
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
    };
    assert!(correct_ops_done, "broadcast protocol should be unaffected");
    // Baseline: the sequencer is gone, clients stall.
    let mut baseline = scenario.clone();
    baseline.algorithm = atsim::sim::Algorithm::SequencerBaseline;
    let trace = run_scenario(&baseline, 17);
    let m = metrics::from_trace(&trace);
    assert!(
        m.ops_stalled > 0,
        "clients must stall once the sequencer crashes"
    );
}

#[test]
fn stalled_account_metric_flags_competing_partial_acks() {
    // Synthetic trace: two conflicting sends for one account slot, no
    // delivery anywhere.
    let mk = |step: u64, digest: &str| TraceEvent {
        step,
        node: Pid(6),
        kind: EventKind::NetSend {
            to: Pid(1),
            kind: "send".into(),
            stream: Some(StreamId::Account(AccountId(8))),
            seq: Some(1),
            digest: Some(digest.to_string()),
        },
    };
    let trace = Trace {
        scenario: "synthetic".into(),
        seed: 0,
        outcome: Outcome::Quiescent,
        scheduler_steps: 2,
        events: vec![mk(0, "aaaa"), mk(1, "bbbb")],
    };
    let m = metrics::from_trace(&trace);
    assert_eq!(m.stalled_accounts, vec![(AccountId(8), 1)]);
}

#[test]
fn snapshot_between_two_updates_reflects_exactly_one() {
    // Mini shared-memory system: p1 updates its cell twice, p2 snapshots
    // once; enumerate every interleaving and check the snapshot against
    // the number of updates linearized before it.
    #[derive(Clone)]
    struct Mini {
        snap: atsim::shm::AtomicSnapshot<u32>,
        writes_done: u32,
        snap_done: bool,
        observed: Option<Vec<Option<u32>>>,
        write_count_at_snap: Option<u32>,
    }
    impl System for Mini {
        fn enabled(&self) -> Vec<EventKey> {
            let mut keys = Vec::new();
            if self.writes_done < 2 {
                keys.push(EventKey::Proc(Pid(1)));
            }
            if !self.snap_done {
                keys.push(EventKey::Proc(Pid(2)));
            }
            keys
        }
        fn step(&mut self, key: EventKey, _sink: &mut TraceSink) {
            match key {
                EventKey::Proc(Pid(1)) => {
                    self.writes_done += 1;
                    self.snap.update(Pid(1), self.writes_done * 10);
                }
                EventKey::Proc(Pid(2)) => {
                    self.snap_done = true;
                    self.observed = Some(self.snap.snapshot());
                    self.write_count_at_snap = Some(self.writes_done);
                }
                _ => {}
            }
        }
    }
    let mini = Mini {
        snap: atsim::shm::AtomicSnapshot::new(2),
        writes_done: 0,
        snap_done: false,
        observed: None,
        write_count_at_snap: None,
    };
    let mut count = 0;
    let mut stack = vec![mini];
    while let Some(sys) = stack.pop() {
        let enabled = sys.enabled();
        if enabled.is_empty() {
            count += 1;
            let expected = match sys.write_count_at_snap.unwrap() {
                0 => None,
                k => Some(k * 10),
            };
            assert_eq!(sys.observed.unwrap()[0], expected);
            continue;
        }
        for key in enabled {
            let mut next = sys.clone();
            next.step(key, &mut TraceSink::new());
            stack.push(next);
        }
    }
    // Three positions for the snapshot among two writes.
    assert_eq!(count, 3);
}

#[test]
fn consensus_participants_finish_within_the_step_bound() {
    // Wait-freedom: every participant finishes in at most four of its own
    // steps regardless of scheduling.
    use atsim::shm::TransferConsensusSystem;
    let proposals = [(Pid(1), 1u64), (Pid(2), 2), (Pid(3), 3)];
    for seed in 0..200 {
        let sys = TransferConsensusSystem::new(&proposals).unwrap();
        let trace = run(
            sys,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            100,
            "waitfree",
        )
        .unwrap();
        assert_eq!(trace.outcome, Outcome::Quiescent);
        // Each participant takes exactly four scheduler steps.
        assert_eq!(
            trace.scheduler_steps,
            3 * u64::from(TransferConsensusSystem::STEPS_PER_PROCESS)
        );
    }
}

#[test]
fn service_mode_is_scenario_controlled() {
    let scenario = runner::load_scenario("k7_compromised_account").unwrap();
    assert_eq!(scenario.service_mode(AccountId(8)), ServiceMode::Equivocating);
    assert_eq!(scenario.service_mode(AccountId(1)), ServiceMode::Correct);
}

#[test]
fn exhaustive_scenarios_run_through_the_runner() {
    let (result, _) = runner::cmd_run(
        "fig2_exhaustive_k2",
        0,
        std::path::Path::new("/tmp/atsim-test-out"),
        None,
        CheckMode::Exact,
    )
    .unwrap();
    assert!(result.all_pass());
    assert!(result.verdicts[0].detail.contains("70/70"));
}

#[test]
fn enumerate_with_crash_positions_multiplies_schedules() {
    // Sweeping the crash point over a two-process toy multiplies the
    // distinct schedules by the number of crash positions that cut the
    // run short in distinct ways.
    let (q0, mu) = {
        let q0 = LedgerState::new([(AccountId(1), Amount(5)), (AccountId(2), Amount(5))]);
        let mut mu = OwnershipMap::new();
        mu.set_owners(AccountId(1), [Pid(1)]);
        mu.set_owners(AccountId(2), [Pid(2)]);
        (q0, mu)
    };
    let mut scripts = BTreeMap::new();
    scripts.insert(Pid(1), vec![Operation::Read { account: AccountId(1) }]);
    scripts.insert(Pid(2), vec![Operation::Read { account: AccountId(2) }]);
    let baseline: usize = {
        let sys = atsim::shm::SnapshotTransferSystem::new(2, q0.clone(), mu.clone(), &scripts);
        enumerate(sys, &FaultPlan::default(), 10, "t").unwrap().count()
    };
    assert_eq!(baseline, 2); // two reads, two orders
    let mut total = 0;
    for crash_step in 0..2u64 {
        let mut faults = FaultPlan::default();
        faults.crashes.insert(Pid(2), crash_step);
        let sys = atsim::shm::SnapshotTransferSystem::new(2, q0.clone(), mu.clone(), &scripts);
        total += enumerate(sys, &faults, 10, "t").unwrap().count();
    }
    // Crash at step 0 kills p2 outright (1 schedule); crash at step 1
    // leaves both orders of the first step (2 schedules).
    assert_eq!(total, 3);
}

#[test]
fn scripted_policy_follows_its_choice_list() {
    // Always pick the first enabled event: p1 runs to completion before
    // p2 ever steps.
    let scenario = runner::load_scenario("fig1_basic").unwrap();
    let sys = runner::build_system(&scenario).unwrap();
    let trace = run(
        sys,
        &Policy::Scripted {
            choices: vec![0; 64],
        },
        0,
        &FaultPlan::default(),
        1000,
        "scripted",
    )
    .unwrap();
    let first_responder = trace
        .events
        .iter()
        .find_map(|e| match e.kind {
            EventKind::Respond { .. } => Some(e.node),
            _ => None,
        })
        .unwrap();
    assert_eq!(first_responder, Pid(1));
    // Same script, same trace.
    let sys = runner::build_system(&scenario).unwrap();
    let again = run(
        sys,
        &Policy::Scripted {
            choices: vec![0; 64],
        },
        0,
        &FaultPlan::default(),
        1000,
        "scripted",
    )
    .unwrap();
    assert_eq!(trace.to_jsonl(), again.to_jsonl());
}

#[test]
fn checker_refuses_oversized_histories() {
    use atsim::checker::{CheckerError, OpSpan};
    use atsim::sim::trace::OpId;
    let q0 = LedgerState::new([(AccountId(1), Amount(1000))]);
    let mut mu = OwnershipMap::new();
    mu.set_owners(AccountId(1), [Pid(1)]);
    let ops = (0..70usize)
        .map(|index| OpSpan {
            id: OpId {
                pid: Pid(1),
                index,
            },
            pid: Pid(1),
            op: Operation::Read {
                account: AccountId(1),
            },
            response: Some(Response::Balance(Amount(1000))),
            invoke_step: 2 * index as u64,
            respond_step: Some(2 * index as u64 + 1),
            visible_step: None,
        })
        .collect();
    let err = check_linearizable(
        &History { ops },
        &q0,
        &mu,
        &SearchLimits::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CheckerError::TooManyOps(70, _)));
}
