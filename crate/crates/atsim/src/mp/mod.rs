//! Byzantine message-passing asset transfer over secure broadcast.
//!
//! Every transfer is one broadcast carrying the transfer tuple, its
//! per-account sequence number, and the dependency set: the incoming
//! transfers the issuer applied since its previous outgoing one. Receivers
//! validate against their own state: issuer owns the account, sequence
//! numbers are gapless, the balance covers the amount, every cited
//! dependency is already validated: and apply at a fixed point, so a
//! transfer funded by money the receiver has not yet seen simply waits for
//! its dependencies. No agreement anywhere: owners order their own
//! accounts, everyone else audits.
//!
//! Accounts with up to `k` owners add one [`service`] per account that
//! hands out certified sequence numbers, and account-order broadcast
//! ensures benign processes accept at most one transfer per slot even if
//! every owner and the service are compromised.

pub mod baseline;
pub mod byzantine;
pub mod node;
pub mod service;
pub mod system;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::broadcast::{Payload, SeqCert};
use crate::ledger::{AccountId, Amount, Operation, Pid, TransferRecord};
use crate::sim::trace::{EventKind, OpId, StreamId};

pub use node::TransferNode;
pub use system::MpSystem;

/// The broadcast payload: one transfer plus the dependency records that
/// must be validated before it. The record's `uid` is
/// `(issuer, per-account sequence number)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TransferMsg {
    pub record: TransferRecord,
    pub deps: BTreeSet<TransferRecord>,
}

/// What a sequence-number certificate signs: the transfer identity minus
/// the dependency set (the issuer picks dependencies after the number is
/// assigned).
pub fn record_binding(source: AccountId, dest: AccountId, amount: Amount, issuer: Pid) -> String {
    format!("{source}.{dest}.{amount}.{issuer}")
}

impl Payload for TransferMsg {
    fn binding(&self) -> String {
        record_binding(
            self.record.source,
            self.record.dest,
            self.record.amount,
            self.record.issuer,
        )
    }
}

/// A broadcast a node wants performed.
#[derive(Debug, Clone)]
pub struct BroadcastReq {
    pub stream: StreamId,
    pub seq: u64,
    pub msg: TransferMsg,
    pub cert: Option<SeqCert>,
    /// The operation this broadcast completes, for trace attribution.
    pub op: Option<OpId>,
}

/// A request for a certified sequence number from an account's service.
#[derive(Debug, Clone, Copy)]
pub struct SeqRequestOut {
    pub account: AccountId,
    pub dest: AccountId,
    pub amount: Amount,
}

/// A baseline client's transfer submission to the sequencer.
#[derive(Debug, Clone, Copy)]
pub struct SubmitOut {
    pub sequencer: Pid,
    pub op: Operation,
}

/// Everything one node event produced.
#[derive(Debug, Clone, Default)]
pub struct NodeOut {
    pub events: Vec<EventKind>,
    pub broadcasts: Vec<BroadcastReq>,
    pub seq_requests: Vec<SeqRequestOut>,
    pub submits: Vec<SubmitOut>,
}

impl NodeOut {
    pub fn new() -> Self {
        Self::default()
    }
}
