//! Asset transfer for accounts shared by up to `k` owners, built from
//! registers, one atomic snapshot, and per-account lists of capacity-`k`
//! consensus objects.
//!
//! A transfer on account `a` is announced in the caller's slot of `R_a`,
//! then the caller runs rounds: collect every announcement, pick the
//! oldest not-yet-committed one (lowest announcement round, ties by pid),
//! grade it success/failure against a snapshot of the published histories,
//! and propose the graded pair to the account's next consensus object.
//! Whatever that object returns is the round's decision; it is merged into
//! the caller's history set, published via the snapshot, and marked
//! committed. The caller keeps running rounds until its own announcement
//! has been decided (possibly by someone else: announcements double as
//! help requests), then reports the decided flag.
//!
//! Each owner passes every round index exactly once, so a consensus
//! object for an account with `k` owners sees at most `k` proposals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ledger::{
    balance_of, AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response,
    TransferRecord,
};
use crate::shm::primitives::{AtomicSnapshot, KConsensus, Register};
use crate::sim::engine::{EventKey, System};
use crate::sim::trace::{DiagCode, EventKind, OpId, TraceSink};

/// An announced transfer: the operation plus the announcer's identity and
/// the round counter it was announced under. `(proposer, round)` is unique
/// per operation, which keeps repeated identical transfers distinct.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Announced {
    pub source: AccountId,
    pub dest: AccountId,
    pub amount: Amount,
    pub proposer: Pid,
    pub round: u64,
}

impl Announced {
    fn record(&self) -> TransferRecord {
        TransferRecord::new(
            self.source,
            self.dest,
            self.amount,
            self.proposer,
            self.round,
        )
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum TxResult {
    Success,
    Failure,
}

type Decision = (Announced, TxResult);
type HistSet = BTreeSet<Decision>;

#[derive(Debug, Clone)]
enum Machine {
    Idle,
    /// Reading announcement registers one at a time.
    Collect {
        op_id: OpId,
        tx: Announced,
        next_reg: u32,
        collected: BTreeSet<Announced>,
    },
    /// Start of a round: take a snapshot and grade the oldest request.
    RoundSnapshot {
        op_id: OpId,
        tx: Announced,
        collected: BTreeSet<Announced>,
    },
    /// Propose the graded pair to this round's consensus object.
    RoundPropose {
        op_id: OpId,
        tx: Announced,
        collected: BTreeSet<Announced>,
        proposal: Decision,
    },
    /// Merge the decision, publish, advance the round.
    RoundPublish {
        op_id: OpId,
        tx: Announced,
        collected: BTreeSet<Announced>,
        decision: Decision,
    },
}

#[derive(Debug, Clone)]
struct ProcState {
    pid: Pid,
    script: Vec<Operation>,
    cursor: usize,
    hist: HistSet,
    committed: BTreeMap<AccountId, BTreeSet<Announced>>,
    round: BTreeMap<AccountId, u64>,
    machine: Machine,
}

impl ProcState {
    fn has_work(&self) -> bool {
        !matches!(self.machine, Machine::Idle) || self.cursor < self.script.len()
    }
}

/// Shared world for one run of the k-shared algorithm.
#[derive(Debug, Clone)]
pub struct SharedTransferSystem {
    n: u32,
    q0: LedgerState,
    mu: OwnershipMap,
    snap: AtomicSnapshot<HistSet>,
    announce: BTreeMap<AccountId, Vec<Register<Announced>>>,
    rounds: BTreeMap<AccountId, Vec<KConsensus<Decision>>>,
    procs: Vec<ProcState>,
    /// (proposer, account, announce round) -> operation, for attributing
    /// decisions reached by helpers.
    announced_ops: BTreeMap<(Pid, AccountId, u64), OpId>,
    visible: BTreeSet<Announced>,
    crashed: BTreeSet<Pid>,
}

impl SharedTransferSystem {
    pub fn new(
        n: u32,
        q0: LedgerState,
        mu: OwnershipMap,
        scripts: &BTreeMap<Pid, Vec<Operation>>,
    ) -> Self {
        let announce = q0
            .accounts()
            .map(|a| (a, (1..=n).map(|i| Register::new(Pid(i))).collect()))
            .collect();
        let rounds = q0.accounts().map(|a| (a, Vec::new())).collect();
        let procs = (1..=n)
            .map(|i| ProcState {
                pid: Pid(i),
                script: scripts.get(&Pid(i)).cloned().unwrap_or_default(),
                cursor: 0,
                hist: HistSet::new(),
                committed: BTreeMap::new(),
                round: BTreeMap::new(),
                machine: Machine::Idle,
            })
            .collect();
        Self {
            n,
            q0,
            mu,
            snap: AtomicSnapshot::new(n as usize),
            announce,
            rounds,
            procs,
            announced_ops: BTreeMap::new(),
            visible: BTreeSet::new(),
            crashed: BTreeSet::new(),
        }
    }

    /// The round-indexed decision sequence of an account's consensus
    /// objects: the ground truth every owner's committed set follows.
    pub fn round_decisions(&self, account: AccountId) -> Vec<(Announced, TxResult)> {
        self.rounds
            .get(&account)
            .into_iter()
            .flatten()
            .map_while(|object| object.decided())
            .collect()
    }

    /// A process's transfer-result history set.
    pub fn hist_of(&self, p: Pid) -> &BTreeSet<(Announced, TxResult)> {
        &self.procs[(p.0 - 1) as usize].hist
    }

    fn balance_at(cells: &[Option<HistSet>], account: AccountId, q0: &LedgerState) -> i128 {
        let successes: BTreeSet<Announced> = cells
            .iter()
            .flatten()
            .flatten()
            .filter(|(_, result)| *result == TxResult::Success)
            .map(|(tx, _)| *tx)
            .collect();
        let records: Vec<TransferRecord> = successes.iter().map(Announced::record).collect();
        balance_of(account, &records, q0).unwrap_or(i128::MIN)
    }

    /// Picks the oldest announcement: lowest round, ties broken by pid.
    fn oldest(collected: &BTreeSet<Announced>) -> Announced {
        *collected
            .iter()
            .min_by_key(|tx| (tx.round, tx.proposer))
            .expect("collected announcements are non-empty")
    }

    fn start_op(&mut self, p: Pid, sink: &mut TraceSink) {
        let idx = (p.0 - 1) as usize;
        let op = self.procs[idx].script[self.procs[idx].cursor];
        let op_id = OpId {
            pid: p,
            index: self.procs[idx].cursor,
        };
        self.procs[idx].cursor += 1;
        sink.emit(
            p,
            EventKind::Invoke {
                op: op_id,
                operation: op,
            },
        );
        match op {
            Operation::Read { account } => {
                let cells = self.snap.snapshot();
                sink.emit(
                    p,
                    EventKind::MemStep {
                        access: "as_snapshot".into(),
                    },
                );
                let balance = Self::balance_at(&cells, account, &self.q0);
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
                if !self.mu.owns(p, from) {
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
                let round = *self.procs[idx].round.entry(from).or_insert(0);
                let tx = Announced {
                    source: from,
                    dest: to,
                    amount,
                    proposer: p,
                    round,
                };
                self.announced_ops.insert((p, from, round), op_id);
                self.announce
                    .get_mut(&from)
                    .expect("validated account")
                    .get_mut(idx)
                    .expect("pid in range")
                    .write(p, tx)
                    .expect("own slot");
                sink.emit(
                    p,
                    EventKind::MemStep {
                        access: "reg_write".into(),
                    },
                );
                self.procs[idx].machine = Machine::Collect {
                    op_id,
                    tx,
                    next_reg: 0,
                    collected: BTreeSet::new(),
                };
            }
        }
    }

    fn consensus_capacity(&self, account: AccountId) -> usize {
        self.mu.owners_of(account).len().max(1)
    }

    fn advance(&mut self, p: Pid, sink: &mut TraceSink) {
        let idx = (p.0 - 1) as usize;
        let machine = std::mem::replace(&mut self.procs[idx].machine, Machine::Idle);
        match machine {
            Machine::Idle => self.start_op(p, sink),
            Machine::Collect {
                op_id,
                tx,
                next_reg,
                mut collected,
            } => {
                let account = tx.source;
                let slot = &self.announce[&account][next_reg as usize];
                if let Some(seen) = slot.read() {
                    collected.insert(seen);
                }
                sink.emit(
                    p,
                    EventKind::MemStep {
                        access: "reg_read".into(),
                    },
                );
                if next_reg + 1 < self.n {
                    self.procs[idx].machine = Machine::Collect {
                        op_id,
                        tx,
                        next_reg: next_reg + 1,
                        collected,
                    };
                    return;
                }
                let committed = self.procs[idx]
                    .committed
                    .entry(account)
                    .or_default()
                    .clone();
                collected.retain(|t| !committed.contains(t));
                debug_assert!(collected.contains(&tx), "own announcement always collected");
                self.procs[idx].machine = Machine::RoundSnapshot {
                    op_id,
                    tx,
                    collected,
                };
            }
            Machine::RoundSnapshot {
                op_id,
                tx,
                collected,
            } => {
                let cells = self.snap.snapshot();
                sink.emit(
                    p,
                    EventKind::MemStep {
                        access: "as_snapshot".into(),
                    },
                );
                let req = Self::oldest(&collected);
                let balance = Self::balance_at(&cells, req.source, &self.q0);
                let result = if balance >= i128::from(req.amount.0) {
                    TxResult::Success
                } else {
                    TxResult::Failure
                };
                self.procs[idx].machine = Machine::RoundPropose {
                    op_id,
                    tx,
                    collected,
                    proposal: (req, result),
                };
            }
            Machine::RoundPropose {
                op_id,
                tx,
                collected,
                proposal,
            } => {
                let account = tx.source;
                let round = *self.procs[idx].round.entry(account).or_insert(0);
                let capacity = self.consensus_capacity(account);
                let objects = self.rounds.get_mut(&account).expect("validated account");
                while objects.len() <= round as usize {
                    objects.push(KConsensus::new(capacity));
                }
                let object = &mut objects[round as usize];
                let returned = object.propose(proposal);
                sink.emit(
                    p,
                    EventKind::KcPropose {
                        account,
                        round,
                        invocations: object.invocations(),
                        capacity,
                    },
                );
                let decision = match returned {
                    Some(decision) => decision,
                    None => {
                        // Unreachable when callers respect the round
                        // discipline; keep the run alive and let the
                        // monitors flag the capacity breach.
                        sink.emit(
                            p,
                            EventKind::Diag {
                                code: DiagCode::ConsensusOverInvoked,
                                detail: format!("{account} round {round}"),
                            },
                        );
                        proposal
                    }
                };
                self.procs[idx].machine = Machine::RoundPublish {
                    op_id,
                    tx,
                    collected,
                    decision,
                };
            }
            Machine::RoundPublish {
                op_id,
                tx,
                mut collected,
                decision,
            } => {
                let account = tx.source;
                self.procs[idx].hist.insert(decision);
                let hist = self.procs[idx].hist.clone();
                self.snap.update(p, hist);
                sink.emit(
                    p,
                    EventKind::MemStep {
                        access: "as_update".into(),
                    },
                );
                let (decided_tx, result) = decision;
                if result == TxResult::Success && self.visible.insert(decided_tx) {
                    if let Some(&owner_op) = self.announced_ops.get(&(
                        decided_tx.proposer,
                        decided_tx.source,
                        decided_tx.round,
                    )) {
                        sink.emit(
                            p,
                            EventKind::Visible {
                                op: owner_op,
                                record: decided_tx.record(),
                            },
                        );
                    }
                }
                self.procs[idx]
                    .committed
                    .entry(account)
                    .or_default()
                    .insert(decided_tx);
                collected.remove(&decided_tx);
                *self.procs[idx].round.entry(account).or_insert(0) += 1;
                if collected.contains(&tx) {
                    self.procs[idx].machine = Machine::RoundSnapshot {
                        op_id,
                        tx,
                        collected,
                    };
                } else {
                    let succeeded = self.procs[idx].hist.contains(&(tx, TxResult::Success));
                    sink.emit(
                        p,
                        EventKind::Respond {
                            op: op_id,
                            operation: Operation::Transfer {
                                from: tx.source,
                                to: tx.dest,
                                amount: tx.amount,
                            },
                            response: Response::Bool(succeeded),
                        },
                    );
                }
            }
        }
    }
}

impl System for SharedTransferSystem {
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
        self.advance(p, sink);
    }

    fn crash(&mut self, p: Pid, _sink: &mut TraceSink) {
        self.crashed.insert(p);
    }
}
