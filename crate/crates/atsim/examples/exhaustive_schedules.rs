//! Schedule enumeration as a model checker: every interleaving of a small
//! racy world is executed and checked. Two owners race transfers in both
//! directions; the money may or may not bounce back in time to fund the
//! second spend, and every outcome must still be linearizable.
//!
//! ```sh
//! cargo run --example exhaustive_schedules
//! ```

use std::collections::BTreeMap;

use atsim::checker::{check_linearizable, History, SearchLimits};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response};
use atsim::shm::SnapshotTransferSystem;
use atsim::sim::engine::enumerate;
use atsim::sim::trace::EventKind;
use atsim::sim::FaultPlan;

fn main() {
    let q0 = LedgerState::new([(AccountId(1), Amount(5)), (AccountId(2), Amount(0))]);
    let mut mu = OwnershipMap::new();
    mu.set_owners(AccountId(1), [Pid(1)]);
    mu.set_owners(AccountId(2), [Pid(2)]);
    let mut scripts = BTreeMap::new();
    scripts.insert(
        Pid(1),
        vec![
            Operation::Transfer {
                from: AccountId(1),
                to: AccountId(2),
                amount: Amount(4),
            },
            Operation::Transfer {
                from: AccountId(1),
                to: AccountId(2),
                amount: Amount(4),
            },
        ],
    );
    scripts.insert(
        Pid(2),
        vec![Operation::Transfer {
            from: AccountId(2),
            to: AccountId(1),
            amount: Amount(4),
        }],
    );

    let system = SnapshotTransferSystem::new(2, q0.clone(), mu.clone(), &scripts);
    let mut total = 0u32;
    let mut outcome_counts: BTreeMap<Vec<bool>, u32> = BTreeMap::new();
    for trace in enumerate(system, &FaultPlan::default(), 24, "exhaustive").unwrap() {
        total += 1;
        let outcomes: Vec<bool> = trace
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Respond {
                    response: Response::Bool(ok),
                    ..
                } => Some(ok),
                _ => None,
            })
            .collect();
        *outcome_counts.entry(outcomes).or_default() += 1;
        let history = History::from_trace(&trace);
        let verdict =
            check_linearizable(&history, &q0, &mu, &SearchLimits::default()).unwrap();
        assert!(verdict.pass, "a schedule produced a non-linearizable history");
    }
    println!("{total} interleavings, all linearizable");
    println!("response patterns seen (in completion order):");
    for (pattern, count) in outcome_counts {
        println!("  {pattern:?}: {count} schedules");
    }
}
