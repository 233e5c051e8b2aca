//! The linearizability checker on hand-built histories: a passing one
//! (with its witness order) and a double-spend (with the minimal prefix
//! that already has no explanation).
//!
//! ```sh
//! cargo run --example check_a_history
//! ```

use atsim::checker::{check_linearizable, History, OpSpan, SearchLimits};
use atsim::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response};
use atsim::sim::trace::OpId;

fn span(
    pid: u32,
    index: usize,
    op: Operation,
    response: Response,
    invoke: u64,
    respond: u64,
) -> OpSpan {
    OpSpan {
        id: OpId {
            pid: Pid(pid),
            index,
        },
        pid: Pid(pid),
        op,
        response: Some(response),
        invoke_step: invoke,
        respond_step: Some(respond),
        visible_step: None,
    }
}

fn main() {
    let q0 = LedgerState::new([(AccountId(1), Amount(5)), (AccountId(2), Amount(0))]);
    let mut mu = OwnershipMap::new();
    mu.set_owners(AccountId(1), [Pid(1)]);
    mu.set_owners(AccountId(2), [Pid(2)]);
    let transfer = Operation::Transfer {
        from: AccountId(1),
        to: AccountId(2),
        amount: Amount(4),
    };
    let read = Operation::Read {
        account: AccountId(1),
    };

    // A read concurrent with a transfer may see either side of it.
    let concurrent = History {
        ops: vec![
            span(1, 0, transfer, Response::Bool(true), 0, 10),
            span(2, 0, read, Response::Balance(Amount(5)), 2, 3),
        ],
    };
    let verdict = check_linearizable(&concurrent, &q0, &mu, &SearchLimits::default()).unwrap();
    println!("concurrent read of the old balance: pass = {}", verdict.pass);
    for (pid, op, response) in verdict.witness.unwrap() {
        println!("  {pid}: {op:?} -> {response:?}");
    }

    // Two successful spends of the same 5 units cannot be explained.
    let double_spend = History {
        ops: vec![
            span(1, 0, transfer, Response::Bool(true), 0, 1),
            span(1, 1, transfer, Response::Bool(true), 2, 3),
            span(2, 0, read, Response::Balance(Amount(1)), 4, 5),
        ],
    };
    let verdict = check_linearizable(&double_spend, &q0, &mu, &SearchLimits::default()).unwrap();
    println!("\ndouble spend: pass = {}", verdict.pass);
    let prefix = verdict.violating_prefix.unwrap();
    println!(
        "minimal violating prefix has {} operation(s):",
        prefix.ops.len()
    );
    for op in &prefix.ops {
        println!("  {}: {:?} -> {:?}", op.pid, op.op, op.response);
    }
}
