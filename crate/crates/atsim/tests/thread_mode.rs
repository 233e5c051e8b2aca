//! Real-thread mode: the same algorithms and primitives driven by OS
//! threads through the mutex-backed objects, with recorded histories
//! checked for linearizability after the fact.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use atsim::checker::{check_linearizable, History, OpSpan, SearchLimits};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid};
use atsim::shm::primitives::threaded::{SharedKConsensus, SharedSnapshot};
use atsim::shm::{SharedWorld, TransferProcess};
use atsim::sim::trace::OpId;

fn world(n: u32, balance: u64) -> (LedgerState, OwnershipMap) {
    let q0 = LedgerState::new((1..=n).map(|i| (AccountId(i), Amount(balance))));
    let mut mu = OwnershipMap::new();
    for i in 1..=n {
        mu.set_owners(AccountId(i), [Pid(i)]);
    }
    (q0, mu)
}

#[test]
fn threaded_transfers_produce_linearizable_histories() {
    const N: u32 = 4;
    for round in 0..30u64 {
        let (q0, mu) = world(N, 6);
        let shared = SharedWorld::new(N, q0.clone(), mu.clone());
        let mut handles = Vec::new();
        for p in 1..=N {
            let shared = Arc::clone(&shared);
            handles.push(thread::spawn(move || {
                let mut process = TransferProcess::new(Pid(p), shared);
                let mut spans = Vec::new();
                let ops = [
                    Operation::Transfer {
                        from: AccountId(p),
                        to: AccountId(p % N + 1),
                        amount: Amount(3 + (round % 3)),
                    },
                    Operation::Read {
                        account: AccountId(p % N + 1),
                    },
                    Operation::Transfer {
                        from: AccountId(p),
                        to: AccountId((p + 1) % N + 1),
                        amount: Amount(4),
                    },
                ];
                for (index, op) in ops.into_iter().enumerate() {
                    let timed = match op {
                        Operation::Transfer { from, to, amount } => {
                            process.transfer(from, to, amount)
                        }
                        Operation::Read { account } => process.read(account),
                    };
                    spans.push(OpSpan {
                        id: OpId { pid: Pid(p), index },
                        pid: Pid(p),
                        op,
                        response: Some(timed.response),
                        invoke_step: timed.invoke_step,
                        respond_step: Some(timed.respond_step),
                        visible_step: None,
                    });
                }
                spans
            }));
        }
        let mut ops = Vec::new();
        for handle in handles {
            ops.extend(handle.join().unwrap());
        }
        ops.sort_by_key(|s| s.invoke_step);
        let history = History { ops };
        let verdict =
            check_linearizable(&history, &q0, &mu, &SearchLimits::default()).unwrap();
        assert!(verdict.pass, "round {round}: {history:?}");
    }
}

#[test]
fn threaded_consensus_objects_agree_under_contention() {
    for _ in 0..50 {
        let object = Arc::new(SharedKConsensus::<u64>::new(6));
        let decisions: Vec<u64> = (1..=6u64)
            .map(|v| {
                let object = Arc::clone(&object);
                thread::spawn(move || object.propose(v).expect("within capacity"))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect();
        let distinct: BTreeSet<u64> = decisions.iter().copied().collect();
        assert_eq!(distinct.len(), 1, "agreement violated: {decisions:?}");
        assert!((1..=6).contains(distinct.iter().next().unwrap()));
    }
}

#[test]
fn successive_snapshots_by_one_reader_are_cellwise_monotone() {
    const N: u32 = 4;
    let snapshot: Arc<SharedSnapshot<u64>> = Arc::new(SharedSnapshot::new(N as usize));
    let stop = Arc::new(AtomicU64::new(0));
    let mut writers = Vec::new();
    for p in 1..N {
        let snapshot = Arc::clone(&snapshot);
        writers.push(thread::spawn(move || {
            for value in 1..=200u64 {
                snapshot.update(Pid(p), value);
            }
        }));
    }
    // Reader: per-cell values never go backwards across successive scans.
    let reader = {
        let snapshot = Arc::clone(&snapshot);
        let stop = Arc::clone(&stop);
        thread::spawn(move || {
            let mut floor = vec![0u64; N as usize];
            while stop.load(Ordering::Acquire) == 0 {
                let view = snapshot.snapshot();
                for (i, cell) in view.iter().enumerate() {
                    let seen = cell.unwrap_or(0);
                    assert!(
                        seen >= floor[i],
                        "cell {i} went backwards: {seen} < {}",
                        floor[i]
                    );
                    floor[i] = seen;
                }
            }
        })
    };
    for w in writers {
        w.join().unwrap();
    }
    stop.store(1, Ordering::Release);
    reader.join().unwrap();
}
