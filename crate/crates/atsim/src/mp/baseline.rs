//! Total-order baseline for message-count comparison.
//!
//! Every transfer is routed to one elected sequencer, which assigns a
//! global order and disseminates it over its own secure-broadcast stream;
//! source order from a single broadcaster is a total order. Replicas apply
//! the sequential specification in that order, so all replicas agree and
//! the issuer learns its response from its own replica. The point of the
//! baseline is its message bill per transfer (one submission plus one full
//! broadcast) and its single point of failure: a crashed sequencer stalls
//! every client.

use crate::ledger::{
    seq_step, Amount, LedgerState, Operation, OwnershipMap, Pid, Response, TransferRecord,
};
use crate::sim::trace::{EventKind, OpId, StreamId};

use super::{BroadcastReq, NodeOut, SubmitOut, TransferMsg};

#[derive(Debug, Clone)]
pub struct BaselineNode {
    me: Pid,
    sequencer: Pid,
    replica: LedgerState,
    mu: OwnershipMap,
    /// Sequencer only: global order counter.
    next_order: u64,
    pending: Option<(OpId, Operation)>,
}

impl BaselineNode {
    pub fn new(me: Pid, sequencer: Pid, q0: LedgerState, mu: OwnershipMap) -> Self {
        Self {
            me,
            sequencer,
            replica: q0,
            mu,
            next_order: 0,
            pending: None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_none()
    }

    fn order(&mut self, issuer: Pid, op: Operation) -> BroadcastReq {
        let Operation::Transfer { from, to, amount } = op else {
            unreachable!("only transfers are ordered");
        };
        self.next_order += 1;
        let record = TransferRecord {
            source: from,
            dest: to,
            amount,
            issuer,
            uid: (issuer, self.next_order),
        };
        BroadcastReq {
            stream: StreamId::Source(self.me),
            seq: self.next_order,
            msg: TransferMsg {
                record,
                deps: Default::default(),
            },
            cert: None,
            op: None,
        }
    }

    pub fn invoke(&mut self, op_id: OpId, op: Operation) -> NodeOut {
        let mut out = NodeOut::new();
        match op {
            Operation::Read { account } => {
                let balance = self
                    .replica
                    .balance(account)
                    .unwrap_or(Amount(0));
                out.events.push(EventKind::Respond {
                    op: op_id,
                    operation: op,
                    response: Response::Balance(balance),
                });
            }
            Operation::Transfer { .. } => {
                self.pending = Some((op_id, op));
                if self.me == self.sequencer {
                    let req = self.order(self.me, op);
                    out.broadcasts.push(req);
                } else {
                    out.submits.push(SubmitOut {
                        sequencer: self.sequencer,
                        op,
                    });
                }
            }
        }
        out
    }

    /// Sequencer side: a client's submission arrives.
    pub fn on_submit(&mut self, client: Pid, op: Operation) -> NodeOut {
        let mut out = NodeOut::new();
        if self.me == self.sequencer {
            out.broadcasts.push(self.order(client, op));
        }
        out
    }

    /// An ordered transfer arrives on the sequencer's stream: apply it and
    /// answer the issuer if it is ours.
    pub fn on_deliver(&mut self, origin: Pid, msg: TransferMsg) -> NodeOut {
        let mut out = NodeOut::new();
        if origin != self.sequencer {
            return out;
        }
        let record = msg.record;
        let op = Operation::Transfer {
            from: record.source,
            to: record.dest,
            amount: record.amount,
        };
        let response = match seq_step(&self.replica, record.issuer, op, &self.mu) {
            Ok((next, response)) => {
                self.replica = next;
                response
            }
            Err(_) => Response::Bool(false),
        };
        if response == Response::Bool(true) {
            out.events.push(EventKind::Apply {
                record,
                origin: record.issuer,
                dep_uids: Vec::new(),
            });
        }
        if record.issuer == self.me {
            if let Some((op_id, pending_op)) = self.pending {
                if pending_op == op {
                    self.pending = None;
                    out.events.push(EventKind::Respond {
                        op: op_id,
                        operation: op,
                        response,
                    });
                }
            }
        }
        out
    }
}
