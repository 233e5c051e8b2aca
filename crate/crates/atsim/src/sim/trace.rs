//! Structured execution traces.
//!
//! Every observable action in a run becomes one [`TraceEvent`] with a
//! strictly increasing `step`. Traces serialize to line-delimited JSON
//! (one event per line) and are the sole input to the checkers, monitors,
//! and metrics: anything a verdict depends on must be in the trace.

use serde::{Deserialize, Serialize};

use crate::ledger::{AccountId, Operation, Pid, Response, TransferRecord};

/// Identifies one operation instance: the invoking process and the index of
/// the operation in that process's script.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct OpId {
    pub pid: Pid,
    pub index: usize,
}

/// Stream along which broadcast delivery order is enforced: per-sender in
/// the single-owner protocol, per-account for shared accounts.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StreamId {
    Source(Pid),
    Account(AccountId),
}

/// Diagnostic codes for events that are suspicious or informative but are
/// not by themselves verdict failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagCode {
    /// A snapshot or read computed a negative balance (protocol bug).
    NegativeBalance,
    /// A consensus object was invoked past its capacity.
    ConsensusOverInvoked,
    /// A delivered message skipped a sequence number and was dropped.
    OutOfOrderDrop,
    /// A message claiming an account its origin does not own was discarded.
    ForgedOwnerDiscarded,
    /// A delivered message stays buffered because validation keeps failing.
    StuckInValidation,
    /// Conflicting same-sequence messages each hold partial ack sets.
    StalledAccount,
    /// The idealized broadcast suppressed a duplicate slot broadcast.
    EquivocationSuppressed,
    /// An operation was invoked while another was pending.
    PendingOperation,
    /// Generic scenario-level note.
    Note,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum EventKind {
    /// A process begins an asset-transfer operation.
    Invoke { op: OpId, operation: Operation },
    /// A process completes an operation with a response.
    Respond {
        op: OpId,
        operation: Operation,
        response: Response,
    },
    /// A successful transfer's effect became visible to other processes
    /// (snapshot update in shared memory, validation in message passing).
    /// Drives the completion rule for operations left pending in a trace.
    Visible { op: OpId, record: TransferRecord },
    /// One atomic shared-memory access.
    MemStep { access: String },
    /// A propose call on a capacity-bounded consensus object.
    KcPropose {
        account: AccountId,
        round: u64,
        invocations: usize,
        capacity: usize,
    },
    /// A consensus participant proposed a value (shared-memory reduction).
    ConsInvoke { value: u64 },
    /// A consensus participant decided. `winner_balance` is the shared
    /// account's balance it observed, which identifies the winner.
    ConsDecide {
        value: u64,
        winner_balance: u64,
        own_transfer_won: bool,
    },
    /// A secure-broadcast invocation by `node`.
    Broadcast {
        stream: StreamId,
        seq: u64,
        digest: String,
    },
    /// A wire message handed to the network.
    NetSend {
        to: Pid,
        kind: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        stream: Option<StreamId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        digest: Option<String>,
    },
    /// The broadcast layer released a message to the application at `node`.
    Deliver {
        origin: Pid,
        stream: StreamId,
        seq: u64,
        digest: String,
    },
    /// `node` validated and applied a transfer issued by `origin`,
    /// merging the cited dependencies (by uid) into the source account's
    /// history.
    Apply {
        record: TransferRecord,
        origin: Pid,
        dep_uids: Vec<(Pid, u64)>,
    },
    /// A sequence-number request reached the account's ordering service.
    SeqRequest { account: AccountId },
    /// The ordering service assigned a sequence number.
    SeqAssign {
        account: AccountId,
        seq: u64,
        requester: Pid,
    },
    /// The process halted.
    Crash,
    /// Diagnostic note; see [`DiagCode`].
    Diag { code: DiagCode, detail: String },
}

/// One trace record: schema `{step, node, kind, data}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub node: Pid,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// No enabled events remained: every non-hung operation finished.
    Quiescent,
    /// The step bound was hit; the trace is still usable.
    StepBoundExceeded,
}

/// A full run: ordered events plus the stop reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub scheduler_steps: u64,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// Line-delimited JSON, one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn diags(&self, code: DiagCode) -> impl Iterator<Item = &TraceEvent> + '_ {
        self.events.iter().filter(move |e| {
            matches!(&e.kind, EventKind::Diag { code: c, .. } if *c == code)
        })
    }
}

/// Collects events during a run and hands out strictly increasing step
/// numbers.
#[derive(Debug, Clone, Default)]
pub struct TraceSink {
    events: Vec<TraceEvent>,
    next_step: u64,
}

impl TraceSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, node: Pid, kind: EventKind) {
        let step = self.next_step;
        self.next_step += 1;
        self.events.push(TraceEvent { step, node, kind });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_trace(
        self,
        scenario: impl Into<String>,
        seed: u64,
        outcome: Outcome,
        scheduler_steps: u64,
    ) -> Trace {
        Trace {
            scenario: scenario.into(),
            seed,
            outcome,
            scheduler_steps,
            events: self.events,
        }
    }
}
