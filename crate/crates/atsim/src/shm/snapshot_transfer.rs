//! Wait-free asset transfer for single-owner accounts over one atomic
//! snapshot object.
//!
//! Each process keeps the set of its own successful transfer records in its
//! snapshot cell. A transfer takes a snapshot, computes the source balance
//! from all cells, and either fails immediately (insufficient funds or not
//! the owner) or appends its record and publishes the grown set with one
//! update. A read is a single snapshot. Because only the owner debits an
//! account, the owner's cell always contains every outgoing transfer, so a
//! positive balance at the snapshot can never be invalidated later.
//!
//! Successful transfers linearize at their update, failed transfers and
//! reads at their snapshot.

use std::collections::{BTreeMap, BTreeSet};

use crate::ledger::{
    balance_of, AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response,
    TransferRecord,
};
use crate::shm::primitives::AtomicSnapshot;
use crate::sim::engine::{EventKey, System};
use crate::sim::trace::{DiagCode, EventKind, OpId, TraceSink};

type OpsSet = BTreeSet<TransferRecord>;

#[derive(Debug, Clone)]
enum Machine {
    Idle,
    /// Snapshot taken and balance verified; the update is still pending.
    UpdatePending {
        op_id: OpId,
        op: Operation,
        record: TransferRecord,
    },
}

#[derive(Debug, Clone)]
struct ProcState {
    pid: Pid,
    script: Vec<Operation>,
    cursor: usize,
    issued: u64,
    ops_mirror: OpsSet,
    machine: Machine,
}

impl ProcState {
    fn has_work(&self) -> bool {
        !matches!(self.machine, Machine::Idle) || self.cursor < self.script.len()
    }
}

/// The whole shared-memory world for one run of the snapshot algorithm:
/// the snapshot object plus every process's local state and script.
#[derive(Debug, Clone)]
pub struct SnapshotTransferSystem {
    q0: LedgerState,
    mu: OwnershipMap,
    shared: AtomicSnapshot<OpsSet>,
    procs: Vec<ProcState>,
    crashed: BTreeSet<Pid>,
    skip_balance_check: bool,
}

impl SnapshotTransferSystem {
    pub fn new(
        n: u32,
        q0: LedgerState,
        mu: OwnershipMap,
        scripts: &BTreeMap<Pid, Vec<Operation>>,
    ) -> Self {
        let procs = (1..=n)
            .map(|i| ProcState {
                pid: Pid(i),
                script: scripts.get(&Pid(i)).cloned().unwrap_or_default(),
                cursor: 0,
                issued: 0,
                ops_mirror: OpsSet::new(),
                machine: Machine::Idle,
            })
            .collect();
        Self {
            q0,
            mu,
            shared: AtomicSnapshot::new(n as usize),
            procs,
            crashed: BTreeSet::new(),
            skip_balance_check: false,
        }
    }

    /// Disable the balance comparison (checker self-test mode).
    pub fn with_skipped_balance_check(mut self) -> Self {
        self.skip_balance_check = true;
        self
    }

    fn balance_at(
        snapshot: &[Option<OpsSet>],
        account: AccountId,
        q0: &LedgerState,
    ) -> i128 {
        let records = snapshot.iter().flatten().flatten();
        balance_of(account, records, q0).unwrap_or(i128::MIN)
    }

    fn proc_mut(&mut self, p: Pid) -> &mut ProcState {
        &mut self.procs[(p.0 - 1) as usize]
    }

    fn start_op(&mut self, p: Pid, sink: &mut TraceSink) {
        let q0 = self.q0.clone();
        let mu = self.mu.clone();
        let snapshot = self.shared.snapshot();
        let skip_balance = self.skip_balance_check;
        let proc = self.proc_mut(p);
        let op = proc.script[proc.cursor];
        let op_id = OpId {
            pid: p,
            index: proc.cursor,
        };
        proc.cursor += 1;
        sink.emit(
            p,
            EventKind::Invoke {
                op: op_id,
                operation: op,
            },
        );
        sink.emit(
            p,
            EventKind::MemStep {
                access: "as_snapshot".into(),
            },
        );
        match op {
            Operation::Read { account } => {
                let balance = Self::balance_at(&snapshot, account, &q0);
                if balance < 0 {
                    sink.emit(
                        p,
                        EventKind::Diag {
                            code: DiagCode::NegativeBalance,
                            detail: format!("read of {account} saw {balance}"),
                        },
                    );
                }
                sink.emit(
                    p,
                    EventKind::Respond {
                        op: op_id,
                        operation: op,
                        response: Response::Balance(Amount(balance.max(0) as u64)),
                    },
                );
            }
            Operation::Transfer { from, to, amount } => {
                let balance = Self::balance_at(&snapshot, from, &q0);
                if balance < 0 {
                    sink.emit(
                        p,
                        EventKind::Diag {
                            code: DiagCode::NegativeBalance,
                            detail: format!("transfer source {from} saw {balance}"),
                        },
                    );
                }
                let funded = skip_balance || balance >= i128::from(amount.0);
                if !mu.owns(p, from) || !funded {
                    sink.emit(
                        p,
                        EventKind::Respond {
                            op: op_id,
                            operation: op,
                            response: Response::Bool(false),
                        },
                    );
                    return;
                }
                let record = TransferRecord::new(from, to, amount, p, proc.issued);
                proc.issued += 1;
                proc.ops_mirror.insert(record);
                proc.machine = Machine::UpdatePending { op_id, op, record };
            }
        }
    }

    fn finish_update(&mut self, p: Pid, sink: &mut TraceSink) {
        let proc = &mut self.procs[(p.0 - 1) as usize];
        let Machine::UpdatePending { op_id, op, record } =
            std::mem::replace(&mut proc.machine, Machine::Idle)
        else {
            unreachable!("finish_update only runs with a pending update");
        };
        let mirror = proc.ops_mirror.clone();
        self.shared.update(p, mirror);
        sink.emit(
            p,
            EventKind::MemStep {
                access: "as_update".into(),
            },
        );
        sink.emit(p, EventKind::Visible { op: op_id, record });
        sink.emit(
            p,
            EventKind::Respond {
                op: op_id,
                operation: op,
                response: Response::Bool(true),
            },
        );
    }
}

impl System for SnapshotTransferSystem {
    fn enabled(&self) -> Vec<EventKey> {
        self.procs
            .iter()
            .filter(|proc| !self.crashed.contains(&proc.pid) && proc.has_work())
            .map(|proc| EventKey::Proc(proc.pid))
            .collect()
    }

    fn step(&mut self, key: EventKey, sink: &mut TraceSink) {
        let EventKey::Proc(p) = key else {
            return;
        };
        match self.procs[(p.0 - 1) as usize].machine {
            Machine::Idle => self.start_op(p, sink),
            Machine::UpdatePending { .. } => self.finish_update(p, sink),
        }
    }

    fn crash(&mut self, p: Pid, _sink: &mut TraceSink) {
        self.crashed.insert(p);
    }
}
