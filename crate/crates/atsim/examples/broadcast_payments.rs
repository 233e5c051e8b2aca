//! The message-passing payment protocol on a fault-free network: each
//! transfer is one secure-broadcast invocation carrying the transfer, its
//! per-account sequence number, and its dependency set. Every node
//! validates and applies independently; nobody agrees on anything.
//!
//! ```sh
//! cargo run --example broadcast_payments
//! ```

use atsim::checker::{check_relaxed, RelaxedMode, SearchLimits};
use atsim::metrics;
use atsim::runner;
use atsim::sim::engine::run;
use atsim::sim::trace::EventKind;

fn main() {
    let scenario = runner::load_scenario("fig4_fairN4").unwrap();
    let system = runner::build_system(&scenario).unwrap();
    let trace = run(
        system,
        &scenario.policy,
        2024,
        &scenario.faults,
        scenario.options.step_bound,
        &scenario.name,
    )
    .unwrap();

    println!("applied transfers, in each node's local order:");
    for node in scenario.pids() {
        let applied: Vec<String> = trace
            .events
            .iter()
            .filter(|e| e.node == node)
            .filter_map(|e| match &e.kind {
                EventKind::Apply { record, .. } => Some(format!(
                    "{}->{}:{} (#{})",
                    record.source, record.dest, record.amount, record.uid.1
                )),
                _ => None,
            })
            .collect();
        println!("  {node}: {}", applied.join(", "));
    }

    let m = metrics::from_trace(&trace);
    println!(
        "\n{} transfers, {} broadcast invocations (one per transfer), {} wire messages",
        m.transfers_applied, m.broadcasts, m.total_messages
    );

    let report = check_relaxed(
        &trace,
        &scenario.q0(),
        &scenario.ownership(),
        &scenario.correct().into_iter().collect(),
        RelaxedMode::TransfersAndOwnOps,
        &SearchLimits::default(),
    )
    .unwrap();
    println!(
        "relaxed correctness: successful transfers linearizable = {}, every local history legal = {}",
        report.part1_pass,
        report.part2.values().all(|&ok| ok)
    );
}
