//! The wait-free single-owner ledger: transfers and reads over one atomic
//! snapshot, no consensus anywhere. Runs a small scripted scenario under a
//! random fair schedule, prints every response, and checks the resulting
//! history against the sequential specification.
//!
//! ```sh
//! cargo run --example single_owner_ledger
//! ```

use std::collections::BTreeMap;

use atsim::checker::{check_linearizable, History, SearchLimits};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid};
use atsim::shm::SnapshotTransferSystem;
use atsim::sim::engine::{run, Policy};
use atsim::sim::trace::EventKind;
use atsim::sim::FaultPlan;

fn main() {
    let q0 = LedgerState::new([
        (AccountId(1), Amount(10)),
        (AccountId(2), Amount(5)),
        (AccountId(3), Amount(0)),
    ]);
    let mut mu = OwnershipMap::new();
    for i in 1..=3 {
        mu.set_owners(AccountId(i), [Pid(i)]);
    }
    let mut scripts = BTreeMap::new();
    scripts.insert(
        Pid(1),
        vec![
            Operation::Transfer {
                from: AccountId(1),
                to: AccountId(2),
                amount: Amount(4),
            },
            Operation::Read {
                account: AccountId(1),
            },
        ],
    );
    scripts.insert(
        Pid(2),
        vec![
            Operation::Transfer {
                from: AccountId(2),
                to: AccountId(3),
                amount: Amount(8),
            },
            Operation::Read {
                account: AccountId(3),
            },
        ],
    );
    scripts.insert(
        Pid(3),
        vec![Operation::Read {
            account: AccountId(2),
        }],
    );

    let system = SnapshotTransferSystem::new(3, q0.clone(), mu.clone(), &scripts);
    let trace = run(
        system,
        &Policy::FairRandom { seed: None },
        42,
        &FaultPlan::default(),
        10_000,
        "single_owner_ledger",
    )
    .unwrap();

    println!("responses in completion order:");
    for event in &trace.events {
        if let EventKind::Respond {
            operation,
            response,
            ..
        } = &event.kind
        {
            println!("  {}: {operation:?} -> {response:?}", event.node);
        }
    }

    let history = History::from_trace(&trace);
    let verdict = check_linearizable(&history, &q0, &mu, &SearchLimits::default()).unwrap();
    println!(
        "history of {} operations linearizable: {}",
        history.len(),
        verdict.pass
    );
    if let Some(witness) = verdict.witness {
        println!("witness order:");
        for (pid, op, response) in witness {
            println!("  {pid}: {op:?} -> {response:?}");
        }
    }
}
