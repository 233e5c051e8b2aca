//! The benign transfer node.

use std::collections::{BTreeMap, BTreeSet};

use crate::ledger::{
    balance_of, AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response,
    TransferRecord,
};
use crate::sim::trace::{DiagCode, EventKind, OpId, StreamId};
use crate::sim::InjectedBug;

use super::{BroadcastReq, NodeOut, SeqRequestOut, TransferMsg};

/// Validation behavior switches.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOpts {
    /// Count the message's own dependency set towards the balance check.
    /// The strict reading checks the validated history alone and rejects
    /// transfers funded by their dependency set.
    pub balance_includes_deps: bool,
    pub bug: Option<InjectedBug>,
}

impl Default for ValidationOpts {
    fn default() -> Self {
        Self {
            balance_includes_deps: true,
            bug: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Pending {
    /// Shared-account transfer waiting for its certified sequence number.
    AwaitingSeq {
        op_id: OpId,
        from: AccountId,
        to: AccountId,
        amount: Amount,
    },
    /// Broadcast sent; completes when the node validates its own message.
    AwaitingValidation { op_id: OpId, record: TransferRecord },
}

#[derive(Debug, Clone)]
struct Buffered {
    origin: Pid,
    msg: TransferMsg,
}

/// Per-process protocol state.
#[derive(Debug, Clone)]
pub struct TransferNode {
    me: Pid,
    q0: LedgerState,
    mu: OwnershipMap,
    /// Validated outgoing transfers per account.
    seq: BTreeMap<AccountId, u64>,
    /// Delivered transfers per stream (well-formedness gate).
    rec: BTreeMap<StreamId, u64>,
    /// Validated transfers involving each account.
    hist: BTreeMap<AccountId, BTreeSet<TransferRecord>>,
    /// Validated incoming transfers per owned account, not yet cited by an
    /// outgoing one.
    deps: BTreeMap<AccountId, BTreeSet<TransferRecord>>,
    /// Delivered, not yet validated. FIFO scan order.
    to_validate: Vec<Buffered>,
    pending: Option<Pending>,
    /// Broadcast counter for this node's source-ordered stream.
    bcast_seq: u64,
    opts: ValidationOpts,
}

impl TransferNode {
    pub fn new(me: Pid, q0: LedgerState, mu: OwnershipMap, opts: ValidationOpts) -> Self {
        Self {
            me,
            q0,
            mu,
            seq: BTreeMap::new(),
            rec: BTreeMap::new(),
            hist: BTreeMap::new(),
            deps: BTreeMap::new(),
            to_validate: Vec::new(),
            pending: None,
            bcast_seq: 0,
            opts,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_none()
    }

    /// Messages delivered but not yet applied (diagnostic surface).
    pub fn buffered(&self) -> usize {
        self.to_validate.len()
    }

    fn hist_of(&self, account: AccountId) -> impl Iterator<Item = &TransferRecord> {
        self.hist.get(&account).into_iter().flatten()
    }

    /// Local view of an account: validated history plus own uncited
    /// dependencies (set union keeps double-listed records single).
    fn view_balance(&self, account: AccountId) -> i128 {
        let records: BTreeSet<&TransferRecord> = self
            .hist_of(account)
            .chain(self.deps.values().flatten())
            .collect();
        balance_of(account, records, &self.q0).unwrap_or(i128::MIN)
    }

    pub fn invoke(&mut self, op_id: OpId, op: Operation) -> NodeOut {
        let mut out = NodeOut::new();
        if self.pending.is_some() {
            out.events.push(EventKind::Diag {
                code: DiagCode::PendingOperation,
                detail: format!("{op_id:?} invoked while an operation is in flight"),
            });
            return out;
        }
        match op {
            Operation::Read { account } => {
                let balance = self.view_balance(account);
                if balance < 0 {
                    out.events.push(EventKind::Diag {
                        code: DiagCode::NegativeBalance,
                        detail: format!("read of {account} saw {balance}"),
                    });
                }
                out.events.push(EventKind::Respond {
                    op: op_id,
                    operation: op,
                    response: Response::Balance(Amount(balance.max(0) as u64)),
                });
            }
            Operation::Transfer { from, to, amount } => {
                let owners = self.mu.owners_of(from);
                if !owners.contains(&self.me)
                    || self.view_balance(from) < i128::from(amount.0)
                {
                    out.events.push(EventKind::Respond {
                        op: op_id,
                        operation: op,
                        response: Response::Bool(false),
                    });
                } else if owners.len() == 1 {
                    let seq = self.seq.get(&from).copied().unwrap_or(0) + 1;
                    let record = TransferRecord::new(from, to, amount, self.me, seq);
                    let deps = self.deps.entry(from).or_default();
                    let msg = TransferMsg {
                        record,
                        deps: std::mem::take(deps),
                    };
                    self.pending = Some(Pending::AwaitingValidation { op_id, record });
                    self.bcast_seq += 1;
                    out.broadcasts.push(BroadcastReq {
                        stream: StreamId::Source(self.me),
                        seq: self.bcast_seq,
                        msg,
                        cert: None,
                        op: Some(op_id),
                    });
                } else {
                    // Shared account: the sequence number comes from the
                    // account's service, with a certificate.
                    self.pending = Some(Pending::AwaitingSeq {
                        op_id,
                        from,
                        to,
                        amount,
                    });
                    out.seq_requests.push(SeqRequestOut {
                        account: from,
                        dest: to,
                        amount,
                    });
                }
            }
        }
        out
    }

    /// The account service assigned a certified number to our pending
    /// shared-account transfer.
    pub fn on_seq_assign(
        &mut self,
        account: AccountId,
        seq: u64,
        cert: crate::broadcast::SeqCert,
    ) -> NodeOut {
        let mut out = NodeOut::new();
        let Some(Pending::AwaitingSeq {
            op_id,
            from,
            to,
            amount,
        }) = self.pending
        else {
            return out;
        };
        if from != account {
            return out;
        }
        let record = TransferRecord::new(from, to, amount, self.me, seq);
        let deps = self.deps.entry(from).or_default();
        let msg = TransferMsg {
            record,
            deps: std::mem::take(deps),
        };
        self.pending = Some(Pending::AwaitingValidation { op_id, record });
        out.broadcasts.push(BroadcastReq {
            stream: StreamId::Account(account),
            seq,
            msg,
            cert: Some(cert),
            op: Some(op_id),
        });
        out
    }

    /// Secure broadcast released a message: well-formedness gate, then the
    /// validation fixed point.
    pub fn on_deliver(&mut self, origin: Pid, stream: StreamId, msg: TransferMsg) -> NodeOut {
        let mut out = NodeOut::new();
        let seq = msg.record.uid.1;
        let expected = self.rec.get(&stream).copied().unwrap_or(0) + 1;
        if seq != expected {
            out.events.push(EventKind::Diag {
                code: DiagCode::OutOfOrderDrop,
                detail: format!("stream {stream:?} delivered seq {seq}, expected {expected}"),
            });
            return out;
        }
        self.rec.insert(stream, seq);
        self.to_validate.push(Buffered { origin, msg });
        self.validate_fixed_point(&mut out);
        out
    }

    fn valid(&self, buffered: &Buffered) -> Result<(), bool> {
        let record = &buffered.msg.record;
        let account = record.source;
        // Ownership can never become true later: discard on failure.
        if record.issuer != buffered.origin || !self.mu.owns(buffered.origin, account) {
            return Err(true);
        }
        let seq_ok = self.opts.bug == Some(InjectedBug::SkipSeqCheck)
            || record.uid.1 == self.seq.get(&account).copied().unwrap_or(0) + 1;
        if !seq_ok {
            return Err(false);
        }
        let funding: BTreeSet<&TransferRecord> = if self.opts.balance_includes_deps {
            self.hist_of(account).chain(buffered.msg.deps.iter()).collect()
        } else {
            self.hist_of(account).collect()
        };
        let balance = balance_of(account, funding, &self.q0).unwrap_or(i128::MIN);
        let balance_ok = self.opts.bug == Some(InjectedBug::SkipBalanceCheck)
            || balance >= i128::from(record.amount.0);
        if !balance_ok {
            return Err(false);
        }
        let deps_ok = buffered
            .msg
            .deps
            .iter()
            .all(|d| self.hist.get(&d.source).is_some_and(|h| h.contains(d)));
        if !deps_ok {
            return Err(false);
        }
        Ok(())
    }

    fn validate_fixed_point(&mut self, out: &mut NodeOut) {
        loop {
            let mut applied = None;
            let mut discard = Vec::new();
            for (i, buffered) in self.to_validate.iter().enumerate() {
                match self.valid(buffered) {
                    Ok(()) => {
                        applied = Some(i);
                        break;
                    }
                    Err(true) => discard.push(i),
                    Err(false) => {}
                }
            }
            for &i in discard.iter().rev() {
                let dropped = self.to_validate.remove(i);
                out.events.push(EventKind::Diag {
                    code: DiagCode::ForgedOwnerDiscarded,
                    detail: format!(
                        "{} claimed {} owned by others",
                        dropped.origin, dropped.msg.record.source
                    ),
                });
            }
            let Some(mut i) = applied else { break };
            i -= discard.iter().filter(|&&d| d < i).count();
            let Buffered { origin, msg } = self.to_validate.remove(i);
            self.apply(origin, msg, out);
        }
    }

    fn apply(&mut self, origin: Pid, msg: TransferMsg, out: &mut NodeOut) {
        let record = msg.record;
        let account = record.source;
        let entry = self.hist.entry(account).or_default();
        entry.extend(msg.deps.iter().copied());
        entry.insert(record);
        self.seq.insert(account, record.uid.1);
        out.events.push(EventKind::Apply {
            record,
            origin,
            dep_uids: msg.deps.iter().map(|d| d.uid).collect(),
        });
        if self.mu.owns(self.me, record.dest) {
            self.deps.entry(record.dest).or_default().insert(record);
        }
        if record.issuer == self.me {
            if let Some(Pending::AwaitingValidation { op_id, record: mine }) = self.pending {
                if mine == record {
                    self.pending = None;
                    out.events.push(EventKind::Respond {
                        op: op_id,
                        operation: Operation::Transfer {
                            from: record.source,
                            to: record.dest,
                            amount: record.amount,
                        },
                        response: Response::Bool(true),
                    });
                }
            }
        }
    }
}
