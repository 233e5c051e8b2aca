//! Double-spend attempts against the quorum broadcast at N=7 with two
//! adversaries: one races an overdraft plus a full-balance spend, the
//! other equivocates (same sequence number, two different payloads, split
//! between peer halves, with the adversaries acknowledging both sides).
//! Echo quorums make sure at most one payload per slot can ever be
//! certified, and validation rejects everything else.
//!
//! ```sh
//! cargo run --example double_spend_containment
//! ```

use std::collections::BTreeMap;

use atsim::checker::{monitors, MonitorCtx};
use atsim::ledger::AccountId;
use atsim::runner;
use atsim::sim::engine::run;
use atsim::sim::trace::{EventKind, Outcome, StreamId};

fn main() {
    let scenario = runner::load_scenario("fig4_byz_doublespend_N7f2").unwrap();
    let system = runner::build_system(&scenario).unwrap();
    let trace = run(
        system,
        &scenario.policy,
        99,
        &scenario.faults,
        scenario.options.step_bound,
        &scenario.name,
    )
    .unwrap();

    // What did the equivocator (p7) manage to get delivered?
    let mut per_slot: BTreeMap<(StreamId, u64), Vec<String>> = BTreeMap::new();
    for event in &trace.events {
        if let EventKind::Deliver {
            stream,
            seq,
            digest,
            ..
        } = &event.kind
        {
            per_slot
                .entry((*stream, *seq))
                .or_default()
                .push(digest.clone());
        }
    }
    for ((stream, seq), digests) in &per_slot {
        let mut distinct = digests.clone();
        distinct.sort();
        distinct.dedup();
        if matches!(stream, StreamId::Source(p) if scenario.faults.is_byzantine(*p)) {
            println!(
                "adversarial slot {stream:?}/{seq}: {} deliveries, {} distinct payload(s)",
                digests.len(),
                distinct.len()
            );
        }
    }

    // How much adversarial money moved? (The race's overdraft and
    // second spend must both be dead on arrival.)
    let mut byz_applied = 0;
    for event in &trace.events {
        if let EventKind::Apply { record, .. } = &event.kind {
            if scenario.faults.is_byzantine(record.issuer) {
                byz_applied += 1;
            }
        }
    }
    println!(
        "adversarial records applied per node: {} (equivocator's one certified transfer only)",
        byz_applied / scenario.correct().len()
    );

    let ctx = MonitorCtx {
        q0: scenario.q0(),
        mu: scenario.ownership(),
        benign: scenario.benign().into_iter().collect(),
        correct: scenario.correct().into_iter().collect(),
        quiescent: trace.outcome == Outcome::Quiescent,
        per_account_sequencing: true,
    };
    let violations = monitors(&trace, &ctx);
    println!("monitor violations: {}", violations.len());
    for v in &violations {
        println!("  {}: {}", v.kind, v.detail);
    }
    let poisoned = AccountId(6);
    println!(
        "note: the race's account {poisoned} never moves money; both its spends fail validation"
    );
}
