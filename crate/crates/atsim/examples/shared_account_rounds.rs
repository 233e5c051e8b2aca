//! A shared account with two owners: outgoing transfers are ordered by
//! per-account rounds of capacity-k consensus. Both owners try to spend
//! the same balance; exactly one round decides success for one of them,
//! and announcements double as help requests, so a stalled owner's
//! transfer can be committed by the other.
//!
//! ```sh
//! cargo run --example shared_account_rounds
//! ```

use std::collections::BTreeMap;

use atsim::checker::{check_linearizable, History, SearchLimits};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid};
use atsim::shm::SharedTransferSystem;
use atsim::sim::engine::{run, Policy};
use atsim::sim::trace::EventKind;
use atsim::sim::FaultPlan;

fn main() {
    let q0 = LedgerState::new([
        (AccountId(1), Amount(5)),
        (AccountId(2), Amount(3)),
        (AccountId(3), Amount(0)),
    ]);
    let mut mu = OwnershipMap::new();
    mu.set_owners(AccountId(1), [Pid(1), Pid(2)]); // shared
    mu.set_owners(AccountId(2), [Pid(3)]);
    let mut scripts = BTreeMap::new();
    scripts.insert(
        Pid(1),
        vec![Operation::Transfer {
            from: AccountId(1),
            to: AccountId(3),
            amount: Amount(4),
        }],
    );
    scripts.insert(
        Pid(2),
        vec![
            Operation::Transfer {
                from: AccountId(1),
                to: AccountId(3),
                amount: Amount(4),
            },
            Operation::Read {
                account: AccountId(1),
            },
        ],
    );
    scripts.insert(
        Pid(3),
        vec![Operation::Transfer {
            from: AccountId(2),
            to: AccountId(1),
            amount: Amount(3),
        }],
    );

    for seed in [3, 8, 21] {
        let system = SharedTransferSystem::new(3, q0.clone(), mu.clone(), &scripts);
        let trace = run(
            system,
            &Policy::FairRandom { seed: None },
            seed,
            &FaultPlan::default(),
            10_000,
            "shared_account_rounds",
        )
        .unwrap();
        println!("seed {seed}:");
        for event in &trace.events {
            match &event.kind {
                EventKind::KcPropose { account, round, .. } => {
                    println!("  {} proposed in round {round} of {account}", event.node);
                }
                EventKind::Respond {
                    operation,
                    response,
                    ..
                } => println!("  {} {operation:?} -> {response:?}", event.node),
                _ => {}
            }
        }
        let history = History::from_trace(&trace);
        let verdict = check_linearizable(&history, &q0, &mu, &SearchLimits::default()).unwrap();
        println!("  linearizable: {}\n", verdict.pass);
    }
}
