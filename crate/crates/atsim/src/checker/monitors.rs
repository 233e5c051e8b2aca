//! Online trace monitors: broadcast properties, application-level safety,
//! and resource discipline, asserted over a finished trace.
//!
//! Monitors never mutate the trace and are deterministic: running them
//! twice yields the same violation list.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ledger::{AccountId, LedgerState, OwnershipMap, Pid, TransferRecord};
use crate::sim::trace::{DiagCode, EventKind, StreamId, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub detail: String,
}

impl Violation {
    fn new(kind: &str, detail: String) -> Self {
        Self {
            kind: kind.to_string(),
            detail,
        }
    }
}

/// What the monitors may assume about the run.
#[derive(Debug, Clone)]
pub struct MonitorCtx {
    pub q0: LedgerState,
    pub mu: OwnershipMap,
    /// Not malicious (may have crashed).
    pub benign: BTreeSet<Pid>,
    /// Neither malicious nor crashed.
    pub correct: BTreeSet<Pid>,
    /// The run was fair and reached quiescence: eventual-delivery
    /// obligations (agreement, validity) are checkable.
    pub quiescent: bool,
    /// Applied records carry per-account sequence numbers (the transfer
    /// protocols). The sequencer baseline numbers records globally, so
    /// per-account contiguity does not apply there.
    pub per_account_sequencing: bool,
}

/// Runs every monitor over the trace; violations are data, not errors.
pub fn monitors(trace: &Trace, ctx: &MonitorCtx) -> Vec<Violation> {
    let mut violations = Vec::new();
    broadcast_properties(trace, ctx, &mut violations);
    application_safety(trace, ctx, &mut violations);
    consensus_capacity(trace, &mut violations);
    diagnosed_negatives(trace, ctx, &mut violations);
    violations
}

fn broadcast_properties(trace: &Trace, ctx: &MonitorCtx, out: &mut Vec<Violation>) {
    // Deliveries per benign node, in trace order.
    let mut per_node: BTreeMap<Pid, Vec<(StreamId, u64, String)>> = BTreeMap::new();
    let mut broadcasts: BTreeSet<(Pid, StreamId, u64, String)> = BTreeSet::new();
    for event in &trace.events {
        match &event.kind {
            EventKind::Deliver {
                origin: _,
                stream,
                seq,
                digest,
            } if ctx.benign.contains(&event.node) => {
                per_node
                    .entry(event.node)
                    .or_default()
                    .push((*stream, *seq, digest.clone()));
            }
            EventKind::Broadcast {
                stream,
                seq,
                digest,
            } => {
                broadcasts.insert((event.node, *stream, *seq, digest.clone()));
            }
            _ => {}
        }
    }

    // Integrity: at most one delivery per slot per benign node, and benign
    // origins must have actually broadcast the content.
    for (&node, deliveries) in &per_node {
        let mut seen: BTreeMap<(StreamId, u64), &String> = BTreeMap::new();
        for (stream, seq, digest) in deliveries {
            if let Some(prior) = seen.insert((*stream, *seq), digest) {
                out.push(Violation::new(
                    "integrity_duplicate",
                    format!("{node} delivered {stream:?}/{seq} twice ({prior} then {digest})"),
                ));
            }
            let origin = match stream {
                StreamId::Source(p) => Some(*p),
                StreamId::Account(_) => None,
            };
            if let Some(origin) = origin {
                if ctx.benign.contains(&origin)
                    && !broadcasts.contains(&(origin, *stream, *seq, digest.clone()))
                {
                    out.push(Violation::new(
                        "integrity_unbroadcast",
                        format!("{node} delivered {stream:?}/{seq} never broadcast by {origin}"),
                    ));
                }
            }
        }
    }

    // Source order: per stream, benign nodes deliver ascending sequence
    // numbers, and any two benign nodes agree on each slot's content.
    let mut slot_content: BTreeMap<(StreamId, u64), (Pid, String)> = BTreeMap::new();
    for (&node, deliveries) in &per_node {
        let mut last_seq: BTreeMap<StreamId, u64> = BTreeMap::new();
        for (stream, seq, digest) in deliveries {
            let prev = last_seq.insert(*stream, *seq).unwrap_or(0);
            if *seq <= prev {
                out.push(Violation::new(
                    "source_order",
                    format!("{node} delivered {stream:?}/{seq} after seq {prev}"),
                ));
            }
            match slot_content.get(&(*stream, *seq)) {
                Some((other, theirs)) if theirs != digest => {
                    out.push(Violation::new(
                        "source_order_content",
                        format!(
                            "{node} and {other} delivered different content for {stream:?}/{seq}"
                        ),
                    ));
                }
                Some(_) => {}
                None => {
                    slot_content.insert((*stream, *seq), (node, digest.clone()));
                }
            }
        }
    }

    if ctx.quiescent {
        // Agreement: correct nodes deliver the same set.
        let sets: BTreeMap<Pid, BTreeSet<(StreamId, u64, String)>> = ctx
            .correct
            .iter()
            .map(|&p| {
                (
                    p,
                    per_node
                        .get(&p)
                        .map(|v| v.iter().cloned().collect())
                        .unwrap_or_default(),
                )
            })
            .collect();
        let union: BTreeSet<(StreamId, u64, String)> =
            sets.values().flatten().cloned().collect();
        for (&p, set) in &sets {
            for missing in union.difference(set) {
                out.push(Violation::new(
                    "agreement",
                    format!(
                        "{p} never delivered {:?}/{} seen by another correct node",
                        missing.0, missing.1
                    ),
                ));
            }
        }
        // Validity: a correct broadcaster delivers its own message.
        for (origin, stream, seq, digest) in &broadcasts {
            if ctx.correct.contains(origin) {
                let own = per_node
                    .get(origin)
                    .is_some_and(|v| v.iter().any(|(s, q, d)| s == stream && q == seq && d == digest));
                if !own {
                    out.push(Violation::new(
                        "validity",
                        format!("{origin} never delivered its own broadcast {stream:?}/{seq}"),
                    ));
                }
            }
        }
    }
}

fn application_safety(trace: &Trace, ctx: &MonitorCtx, out: &mut Vec<Violation>) {
    // Per benign node: applied records in order, plus the records each
    // apply merged (the cited dependencies).
    struct NodeView {
        applied: BTreeMap<(AccountId, u64), TransferRecord>,
        hist: BTreeMap<AccountId, BTreeSet<TransferRecord>>,
        by_uid: BTreeMap<(Pid, u64), TransferRecord>,
    }
    let mut views: BTreeMap<Pid, NodeView> = BTreeMap::new();
    // Cross-node slot content.
    let mut slot_records: BTreeMap<(AccountId, u64), (Pid, TransferRecord)> = BTreeMap::new();

    for event in &trace.events {
        let EventKind::Apply {
            record, dep_uids, ..
        } = &event.kind
        else {
            continue;
        };
        if !ctx.benign.contains(&event.node) {
            continue;
        }
        let view = views.entry(event.node).or_insert_with(|| NodeView {
            applied: BTreeMap::new(),
            hist: BTreeMap::new(),
            by_uid: BTreeMap::new(),
        });
        let account = record.source;
        let seq = record.uid.1;
        if let Some(prior) = view.applied.insert((account, seq), *record) {
            if prior != *record {
                out.push(Violation::new(
                    "double_spend_slot",
                    format!(
                        "{} applied two records for {account}/{seq}",
                        event.node
                    ),
                ));
            } else {
                out.push(Violation::new(
                    "double_apply",
                    format!("{} applied {account}/{seq} twice", event.node),
                ));
            }
        }
        // Rebuild the node's history the way validation merges it.
        let entry = view.hist.entry(account).or_default();
        for uid in dep_uids {
            if let Some(dep) = view.by_uid.get(uid) {
                entry.insert(*dep);
            }
        }
        entry.insert(*record);
        view.by_uid.insert(record.uid, *record);
        let balance =
            crate::ledger::balance_of(account, view.hist[&account].iter(), &ctx.q0)
                .unwrap_or(i128::MIN);
        if balance < 0 {
            out.push(Violation::new(
                "negative_balance",
                format!(
                    "{}: history balance of {account} is {balance} after applying seq {seq}",
                    event.node
                ),
            ));
        }
        match slot_records.get(&(account, seq)) {
            Some((other, prior)) if prior != record => {
                out.push(Violation::new(
                    "cross_node_slot_conflict",
                    format!(
                        "{} and {other} applied different records for {account}/{seq}",
                        event.node
                    ),
                ));
            }
            Some(_) => {}
            None => {
                slot_records.insert((account, seq), (event.node, *record));
            }
        }
    }

    for (&node, view) in &views {
        // Per-source contiguity: applied sequence numbers per account are
        // exactly 1..=m (prefix agreement across nodes follows).
        if ctx.per_account_sequencing {
            let mut per_account: BTreeMap<AccountId, Vec<u64>> = BTreeMap::new();
            for &(account, seq) in view.applied.keys() {
                per_account.entry(account).or_default().push(seq);
            }
            for (account, seqs) in per_account {
                let expected: Vec<u64> = (1..=seqs.len() as u64).collect();
                if seqs != expected {
                    out.push(Violation::new(
                        "sequence_gap",
                        format!("{node}: applied seqs for {account} are {seqs:?}"),
                    ));
                }
            }
        }
        // Conservation over the node's deduplicated record set.
        let all: BTreeSet<&TransferRecord> = view.hist.values().flatten().collect();
        let mut total: i128 = 0;
        for account in ctx.q0.accounts() {
            total += crate::ledger::balance_of(account, all.iter().copied(), &ctx.q0)
                .unwrap_or(i128::MIN);
        }
        let expected = i128::from(ctx.q0.total().map(|t| t.0).unwrap_or(0));
        if total != expected {
            out.push(Violation::new(
                "conservation",
                format!("{node}: total balance {total}, initial {expected}"),
            ));
        }
    }
}

fn consensus_capacity(trace: &Trace, out: &mut Vec<Violation>) {
    for event in &trace.events {
        if let EventKind::KcPropose {
            account,
            round,
            invocations,
            capacity,
        } = &event.kind
        {
            if invocations > capacity {
                out.push(Violation::new(
                    "consensus_over_capacity",
                    format!(
                        "consensus object {account}/{round} saw {invocations} proposals, capacity {capacity}"
                    ),
                ));
            }
        }
    }
}

fn diagnosed_negatives(trace: &Trace, ctx: &MonitorCtx, out: &mut Vec<Violation>) {
    for event in trace.diags(DiagCode::NegativeBalance) {
        if ctx.benign.contains(&event.node) {
            let EventKind::Diag { detail, .. } = &event.kind else {
                continue;
            };
            out.push(Violation::new(
                "negative_balance",
                format!("{}: {detail}", event.node),
            ));
        }
    }
}
