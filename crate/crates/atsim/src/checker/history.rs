//! Operation histories extracted from traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::{Operation, Pid, Response};
use crate::sim::trace::{EventKind, OpId, Trace};

/// One operation's span in a history. `respond_step = None` means the
/// invocation is incomplete; `visible_step` records when its effect reached
/// shared state (snapshot update or validation), which drives the
/// completion rule for pending transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpSpan {
    pub id: OpId,
    pub pid: Pid,
    pub op: Operation,
    pub response: Option<Response>,
    pub invoke_step: u64,
    pub respond_step: Option<u64>,
    pub visible_step: Option<u64>,
}

impl OpSpan {
    pub fn is_complete(&self) -> bool {
        self.response.is_some()
    }
}

/// A history: invocation/response pairs with real-time spans. Incomplete
/// invocations are permitted. Per process, invocations and responses
/// alternate (processes are sequential).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub ops: Vec<OpSpan>,
}

impl History {
    /// Collects every operation in the trace.
    pub fn from_trace(trace: &Trace) -> Self {
        Self::from_trace_filtered(trace, |_| true)
    }

    /// Collects the operations of processes accepted by `keep`.
    pub fn from_trace_filtered(trace: &Trace, keep: impl Fn(Pid) -> bool) -> Self {
        let mut ops: BTreeMap<OpId, OpSpan> = BTreeMap::new();
        for event in &trace.events {
            match &event.kind {
                EventKind::Invoke { op, operation } => {
                    if keep(op.pid) {
                        ops.insert(
                            *op,
                            OpSpan {
                                id: *op,
                                pid: op.pid,
                                op: *operation,
                                response: None,
                                invoke_step: event.step,
                                respond_step: None,
                                visible_step: None,
                            },
                        );
                    }
                }
                EventKind::Respond { op, response, .. } => {
                    if let Some(span) = ops.get_mut(op) {
                        span.response = Some(*response);
                        span.respond_step = Some(event.step);
                    }
                }
                EventKind::Visible { op, .. } => {
                    if let Some(span) = ops.get_mut(op) {
                        if span.visible_step.is_none() {
                            span.visible_step = Some(event.step);
                        }
                    }
                }
                _ => {}
            }
        }
        let mut ops: Vec<OpSpan> = ops.into_values().collect();
        ops.sort_by_key(|s| s.invoke_step);
        Self { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// The sub-history of events at or before `step`: operations invoked by
    /// then, with responses and visibility only if they happened by then.
    pub fn prefix_at(&self, step: u64) -> History {
        let ops = self
            .ops
            .iter()
            .filter(|s| s.invoke_step <= step)
            .map(|s| {
                let mut cut = s.clone();
                if cut.respond_step.is_some_and(|r| r > step) {
                    cut.respond_step = None;
                    cut.response = None;
                }
                if cut.visible_step.is_some_and(|v| v > step) {
                    cut.visible_step = None;
                }
                cut
            })
            .collect();
        History { ops }
    }

    /// Every step at which this history gains an event, ascending.
    pub fn event_steps(&self) -> Vec<u64> {
        let mut steps: Vec<u64> = self
            .ops
            .iter()
            .flat_map(|s| {
                [Some(s.invoke_step), s.respond_step, s.visible_step]
                    .into_iter()
                    .flatten()
            })
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}
