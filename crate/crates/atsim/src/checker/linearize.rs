//! Exact linearizability decision for asset-transfer histories.
//!
//! The search walks linearization orders depth-first: at each point it may
//! place any unplaced operation whose real-time predecessors are all
//! placed, provided replaying it against the sequential specification
//! reproduces the recorded response. Two properties of the asset-transfer
//! type make this fast:
//!
//! - an operation's state effect is fixed by its recorded response
//!   (successful transfers debit/credit fixed amounts; everything else is
//!   a no-op), so the ledger state is a function of the *set* of placed
//!   operations, and
//! - therefore a set of placed operations that failed once can never
//!   succeed, which lets the search memoize failed sets as bitmasks.
//!
//! Incomplete invocations follow the completion rule: a pending transfer
//! whose effect reached shared state may be completed with `true` (the
//! search decides whether to include it); all other pending operations are
//! removed.

use std::collections::HashSet;

use thiserror::Error;

use crate::checker::history::{History, OpSpan};
use crate::ledger::{seq_step, LedgerState, Operation, OwnershipMap, Pid, Response};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckerError {
    #[error("history has {0} operations, checker bound is {1}")]
    TooManyOps(usize, usize),
    #[error("search exceeded {0} nodes")]
    SearchBoundExceeded(u64),
}

/// Precedence constraints the witness order must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderConstraint {
    /// Completed-before order from the trace (linearizability).
    RealTime,
    /// Only each process's own order (sequential consistency).
    PerProcessOnly,
}

/// Search resource limits.
#[derive(Debug, Clone, Copy)]
pub struct SearchLimits {
    pub max_ops: usize,
    pub max_nodes: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_ops: 64,
            max_nodes: 5_000_000,
        }
    }
}

/// Outcome of a check: on pass, a legal sequential witness; on fail, a
/// minimal violating prefix of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub witness: Option<Vec<(Pid, Operation, Response)>>,
    pub violating_prefix: Option<History>,
}

impl Verdict {
    fn passed(witness: Vec<(Pid, Operation, Response)>) -> Self {
        Self {
            pass: true,
            witness: Some(witness),
            violating_prefix: None,
        }
    }

    fn failed(prefix: History) -> Self {
        Self {
            pass: false,
            witness: None,
            violating_prefix: Some(prefix),
        }
    }
}

struct Candidate {
    pid: Pid,
    op: Operation,
    response: Response,
    /// Real-time response step; `u64::MAX` while pending.
    respond_step: u64,
    invoke_step: u64,
    /// Pending transfer completed by the rule: may be left out.
    optional: bool,
}

struct Search<'a> {
    candidates: &'a [Candidate],
    mu: &'a OwnershipMap,
    order: OrderConstraint,
    failed_sets: HashSet<u128>,
    nodes: u64,
    max_nodes: u64,
    witness: Vec<usize>,
}

impl Search<'_> {
    /// `placed` is the bitmask of already-linearized candidates.
    fn explore(&mut self, placed: u128, mandatory_left: usize, state: &LedgerState) -> Result<bool, CheckerError> {
        if mandatory_left == 0 {
            return Ok(true);
        }
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(CheckerError::SearchBoundExceeded(self.max_nodes));
        }
        if self.failed_sets.contains(&placed) {
            return Ok(false);
        }
        for (i, cand) in self.candidates.iter().enumerate() {
            if placed & (1 << i) != 0 {
                continue;
            }
            if !self.schedulable(placed, i) {
                continue;
            }
            let Ok((next, got)) = seq_step(state, cand.pid, cand.op, self.mu) else {
                continue;
            };
            if got != cand.response {
                continue;
            }
            self.witness.push(i);
            if self.explore(placed | (1 << i), mandatory_left - usize::from(!cand.optional), &next)? {
                return Ok(true);
            }
            self.witness.pop();
        }
        self.failed_sets.insert(placed);
        Ok(false)
    }

    /// Whether candidate `i` may be placed next: all of its predecessors
    /// under the active order constraint are placed.
    fn schedulable(&self, placed: u128, i: usize) -> bool {
        let me = &self.candidates[i];
        self.candidates.iter().enumerate().all(|(j, other)| {
            if i == j || placed & (1 << j) != 0 {
                return true;
            }
            let precedes = match self.order {
                OrderConstraint::RealTime => other.respond_step < me.invoke_step,
                OrderConstraint::PerProcessOnly => {
                    other.pid == me.pid && other.invoke_step < me.invoke_step
                }
            };
            !precedes
        })
    }
}

fn completion_candidates(h: &History) -> Vec<Candidate> {
    h.ops
        .iter()
        .filter_map(|span| match span {
            OpSpan {
                response: Some(response),
                ..
            } => Some(Candidate {
                pid: span.pid,
                op: span.op,
                response: *response,
                respond_step: span.respond_step.expect("complete op has respond step"),
                invoke_step: span.invoke_step,
                optional: false,
            }),
            OpSpan {
                response: None,
                op: op @ Operation::Transfer { .. },
                visible_step: Some(_),
                ..
            } => Some(Candidate {
                pid: span.pid,
                op: *op,
                response: Response::Bool(true),
                respond_step: u64::MAX,
                invoke_step: span.invoke_step,
                optional: true,
            }),
            // Pending reads, failed-at-heart transfers, and invisible
            // transfers are removed by the completion.
            _ => None,
        })
        .collect()
}

fn decide(
    h: &History,
    q0: &LedgerState,
    mu: &OwnershipMap,
    order: OrderConstraint,
    limits: &SearchLimits,
) -> Result<Option<Vec<(Pid, Operation, Response)>>, CheckerError> {
    let candidates = completion_candidates(h);
    if candidates.len() > limits.max_ops.min(128) {
        return Err(CheckerError::TooManyOps(candidates.len(), limits.max_ops));
    }
    let mandatory = candidates.iter().filter(|c| !c.optional).count();
    let mut search = Search {
        candidates: &candidates,
        mu,
        order,
        failed_sets: HashSet::new(),
        nodes: 0,
        max_nodes: limits.max_nodes,
        witness: Vec::new(),
    };
    if search.explore(0, mandatory, q0)? {
        let order: Vec<_> = search
            .witness
            .iter()
            .map(|&i| {
                let c = &candidates[i];
                (c.pid, c.op, c.response)
            })
            .collect();
        Ok(Some(order))
    } else {
        Ok(None)
    }
}

/// Exact linearizability check of `h` against the sequential
/// specification from `q0` and `mu`.
///
/// On pass, the verdict carries a legal sequential witness (it replays
/// under [`crate::ledger::replay_legal`]). On fail, it carries the
/// shortest prefix of the history that is already non-linearizable.
pub fn check_linearizable(
    h: &History,
    q0: &LedgerState,
    mu: &OwnershipMap,
    limits: &SearchLimits,
) -> Result<Verdict, CheckerError> {
    match decide(h, q0, mu, OrderConstraint::RealTime, limits)? {
        Some(witness) => Ok(Verdict::passed(witness)),
        None => {
            for step in h.event_steps() {
                let prefix = h.prefix_at(step);
                if decide(&prefix, q0, mu, OrderConstraint::RealTime, limits)?.is_none() {
                    return Ok(Verdict::failed(prefix));
                }
            }
            Ok(Verdict::failed(h.clone()))
        }
    }
}

/// Sequential-consistency flavor of the same search: the witness must
/// respect each process's own order but not cross-process real time.
pub fn check_sequentially_consistent(
    h: &History,
    q0: &LedgerState,
    mu: &OwnershipMap,
    limits: &SearchLimits,
) -> Result<Verdict, CheckerError> {
    match decide(h, q0, mu, OrderConstraint::PerProcessOnly, limits)? {
        Some(witness) => Ok(Verdict::passed(witness)),
        None => Ok(Verdict::failed(h.clone())),
    }
}
