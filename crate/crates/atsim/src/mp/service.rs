//! Per-account sequence-number service for shared accounts.
//!
//! Stands in for a replica group run by the account's owners: it assigns
//! monotonically increasing numbers to the account's outgoing transfers
//! and certifies each assignment with an owner-quorum of tags. The
//! compromised modes model a broken owner quorum: `Stalled` never answers
//! (transfers on the account hang, nothing else is affected) and
//! `Equivocating` assigns the same number to conflicting transfers, which
//! account-order broadcast must contain.

use std::collections::{BTreeSet, VecDeque};

use crate::broadcast::{Authenticator, SeqCert};
use crate::ledger::{AccountId, Amount, Pid};
use crate::sim::ServiceMode;

use super::record_binding;

#[derive(Debug, Clone, Copy)]
pub struct QueuedRequest {
    pub requester: Pid,
    pub dest: AccountId,
    pub amount: Amount,
}

#[derive(Debug, Clone, Copy)]
pub struct Assignment {
    pub requester: Pid,
    pub seq: u64,
    pub dest: AccountId,
    pub amount: Amount,
}

#[derive(Debug, Clone)]
pub struct ServiceState {
    pub account: AccountId,
    pub mode: ServiceMode,
    owners: BTreeSet<Pid>,
    next: u64,
    queue: VecDeque<QueuedRequest>,
}

impl ServiceState {
    pub fn new(account: AccountId, owners: BTreeSet<Pid>, mode: ServiceMode) -> Self {
        Self {
            account,
            mode,
            owners,
            next: 1,
            queue: VecDeque::new(),
        }
    }

    pub fn enqueue(&mut self, req: QueuedRequest) {
        self.queue.push_back(req);
    }

    /// Whether the scheduler may step this service.
    pub fn has_work(&self) -> bool {
        !self.queue.is_empty() && self.mode != ServiceMode::Stalled
    }

    /// Serve the oldest request: assign a number and certify it.
    pub fn step(&mut self, auth: &Authenticator) -> Option<(Assignment, SeqCert)> {
        if !self.has_work() {
            return None;
        }
        let req = self.queue.pop_front().expect("has_work checked");
        let seq = match self.mode {
            ServiceMode::Correct => {
                let s = self.next;
                self.next += 1;
                s
            }
            // A compromised quorum hands the same slot to everyone.
            ServiceMode::Equivocating => self.next,
            ServiceMode::Stalled => unreachable!("stalled services are never stepped"),
        };
        let binding = record_binding(self.account, req.dest, req.amount, req.requester);
        let cert = SeqCert::sign_all(
            self.account,
            seq,
            binding,
            self.owners.iter().copied(),
            auth,
        );
        Some((
            Assignment {
                requester: req.requester,
                seq,
                dest: req.dest,
                amount: req.amount,
            },
            cert,
        ))
    }
}
