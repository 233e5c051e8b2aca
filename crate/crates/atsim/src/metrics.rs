//! Metrics derived from traces. Metrics inform reports; they never decide
//! pass/fail.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ledger::{AccountId, Pid};
use crate::sim::trace::{EventKind, StreamId, Trace};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Metrics {
    /// Wire messages by kind (send/ack/cert/ready/oracle/raw/...).
    pub messages_by_kind: BTreeMap<String, u64>,
    pub total_messages: u64,
    /// Secure-broadcast invocations.
    pub broadcasts: u64,
    /// Operations invoked / completed; stalled = invoked, never completed.
    pub ops_invoked: u64,
    pub ops_completed: u64,
    pub ops_stalled: u64,
    /// Distinct transfers applied at one or more benign nodes.
    pub transfers_applied: u64,
    /// Completion latency per op in trace steps: mean and max.
    pub latency_mean: f64,
    pub latency_max: u64,
    /// Messages delivered but never applied at quiescence, per node count.
    pub stuck_buffered: u64,
    /// Ownership forgeries discarded by validation.
    pub rejected_forgeries: u64,
    /// Account slots with competing partial ack sets and no delivery.
    pub stalled_accounts: Vec<(AccountId, u64)>,
}

pub fn from_trace(trace: &Trace) -> Metrics {
    let mut m = Metrics::default();
    let mut invoked: BTreeMap<(Pid, usize), u64> = BTreeMap::new();
    let mut completed: BTreeMap<(Pid, usize), u64> = BTreeMap::new();
    let mut applied: BTreeSet<(Pid, u64)> = BTreeSet::new();
    let mut delivered_up: BTreeMap<Pid, u64> = BTreeMap::new();
    let mut applies: BTreeMap<Pid, u64> = BTreeMap::new();
    // Per account-stream slot: digests sent, and whether anything delivered.
    let mut account_sends: BTreeMap<(AccountId, u64), BTreeSet<String>> = BTreeMap::new();
    let mut account_delivered: BTreeSet<(AccountId, u64)> = BTreeSet::new();

    for event in &trace.events {
        match &event.kind {
            EventKind::NetSend {
                kind, stream, seq, digest, ..
            } => {
                *m.messages_by_kind.entry(kind.clone()).or_default() += 1;
                m.total_messages += 1;
                if kind == "send" {
                    if let (Some(StreamId::Account(a)), Some(s), Some(d)) = (stream, seq, digest) {
                        account_sends.entry((*a, *s)).or_default().insert(d.clone());
                    }
                }
            }
            EventKind::Broadcast { .. } => m.broadcasts += 1,
            EventKind::Invoke { op, .. } => {
                invoked.insert((op.pid, op.index), event.step);
            }
            EventKind::Respond { op, .. } => {
                completed.insert((op.pid, op.index), event.step);
            }
            EventKind::Apply { record, .. } => {
                applied.insert(record.uid);
                *applies.entry(event.node).or_default() += 1;
            }
            EventKind::Deliver { stream, seq, .. } => {
                *delivered_up.entry(event.node).or_default() += 1;
                if let StreamId::Account(a) = stream {
                    account_delivered.insert((*a, *seq));
                }
            }
            EventKind::Diag { code, .. }
                if *code == crate::sim::trace::DiagCode::ForgedOwnerDiscarded =>
            {
                m.rejected_forgeries += 1;
            }
            _ => {}
        }
    }

    m.ops_invoked = invoked.len() as u64;
    m.ops_completed = completed.len() as u64;
    m.ops_stalled = invoked
        .keys()
        .filter(|k| !completed.contains_key(k))
        .count() as u64;
    m.transfers_applied = applied.len() as u64;
    let latencies: Vec<u64> = completed
        .iter()
        .filter_map(|(k, &end)| invoked.get(k).map(|&start| end.saturating_sub(start)))
        .collect();
    if !latencies.is_empty() {
        m.latency_mean = latencies.iter().sum::<u64>() as f64 / latencies.len() as f64;
        m.latency_max = latencies.iter().copied().max().unwrap_or(0);
    }
    // Deliveries that never turned into applies, summed over nodes. Only
    // meaningful for the transfer protocol (the baseline applies its whole
    // stream).
    m.stuck_buffered = delivered_up
        .iter()
        .map(|(node, &d)| d.saturating_sub(applies.get(node).copied().unwrap_or(0)))
        .sum();
    m.stalled_accounts = account_sends
        .iter()
        .filter(|(slot, digests)| digests.len() >= 2 && !account_delivered.contains(slot))
        .map(|(&(a, s), _)| (a, s))
        .collect();
    m
}
