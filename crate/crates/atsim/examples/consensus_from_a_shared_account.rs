//! Consensus out of money: `k` processes agree on a value using nothing
//! but registers and one account they all own. The account starts at
//! `2k`; participant `p` tries to withdraw `2k - p`; any two withdrawals
//! overshoot the balance, so exactly one succeeds and leaves balance `p`,
//! naming the winner.
//!
//! Enumerates every interleaving at k=2, then shows one scripted k=3 run
//! where a chosen participant wins.
//!
//! ```sh
//! cargo run --example consensus_from_a_shared_account
//! ```

use std::collections::BTreeSet;

use atsim::ledger::Pid;
use atsim::shm::TransferConsensusSystem;
use atsim::sim::engine::{enumerate, run, EventKey, Policy, System};
use atsim::sim::trace::{EventKind, TraceSink};
use atsim::sim::FaultPlan;

fn main() {
    // Every interleaving of two participants agrees.
    let proposals = [(Pid(1), 111u64), (Pid(2), 222)];
    let system = TransferConsensusSystem::new(&proposals).unwrap();
    let mut total = 0;
    let mut decisions_seen = BTreeSet::new();
    for trace in enumerate(system, &FaultPlan::default(), 16, "k2").unwrap() {
        total += 1;
        let decided: BTreeSet<u64> = trace
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ConsDecide { value, .. } => Some(value),
                _ => None,
            })
            .collect();
        assert_eq!(decided.len(), 1, "agreement in every interleaving");
        decisions_seen.extend(decided);
    }
    println!("k=2: {total} interleavings, every one agreed; winners seen: {decisions_seen:?}");

    // k=3, scripted: let participant 2 run alone through its withdrawal
    // first. 2k = 6; it withdraws 2k - 2 = 4, leaving exactly 2.
    let proposals = [(Pid(1), 101u64), (Pid(2), 202), (Pid(3), 303)];
    let mut system = TransferConsensusSystem::new(&proposals).unwrap();
    let mut sink = TraceSink::new();
    system.step(EventKey::Proc(Pid(2)), &mut sink); // announce
    system.step(EventKey::Proc(Pid(2)), &mut sink); // withdraw
    println!(
        "k=3: after p2's withdrawal the shared balance is {} (the winner's pid)",
        system.shared_balance()
    );
    let trace = run(
        system,
        &Policy::FairRandom { seed: None },
        7,
        &FaultPlan::default(),
        100,
        "k3",
    )
    .unwrap();
    for event in &trace.events {
        if let EventKind::ConsDecide {
            value,
            winner_balance,
            ..
        } = event.kind
        {
            println!(
                "  {} decided {value} (balance read: {winner_balance})",
                event.node
            );
        }
    }
}
