//! Deterministic scheduler: seeded fair runs, exhaustive interleaving
//! enumeration, and scripted schedules over any [`System`].

use rand::prelude::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Pid;
use crate::sim::trace::{EventKind, Outcome, Trace, TraceSink};
use crate::sim::FaultPlan;

/// A schedulable event. The derived ordering is the canonical order used
/// by scripted schedules and enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKey {
    /// Run the next atomic step of (or invoke the next operation on) a
    /// process.
    Proc(Pid),
    /// Deliver the in-flight network message with this id.
    Deliver(u64),
    /// Let the ordering service for an account handle one queued request.
    Service(crate::ledger::AccountId),
}

/// A simulated system: a passive state machine advanced one atomic step at
/// a time by the scheduler.
pub trait System: Clone {
    /// Currently enabled events, in canonical (sorted) order.
    fn enabled(&self) -> Vec<EventKey>;

    /// Execute one atomic step.
    fn step(&mut self, key: EventKey, sink: &mut TraceSink);

    /// Halt a process at the current point.
    fn crash(&mut self, p: Pid, sink: &mut TraceSink) {
        let _ = p;
        let _ = sink;
    }
}

/// Scheduling policy for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Pick uniformly among enabled events each step; every enabled event
    /// is eventually scheduled with probability one.
    FairRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Enumerate every interleaving up to the step bound (see
    /// [`enumerate`]).
    Exhaustive { max_steps: usize },
    /// Follow a fixed list of indices into the canonical enabled list.
    Scripted { choices: Vec<usize> },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("exhaustive enumeration requires total steps <= {0}")]
    BoundExceeded(usize),
    #[error("policy {0} cannot drive a single run; use enumerate")]
    NotRunnable(&'static str),
}

/// Default cap on scheduler steps for a single run.
pub const DEFAULT_STEP_BOUND: u64 = 100_000;

/// Hard cap on total steps accepted by [`enumerate`]; interleaving counts
/// explode past this.
pub const ENUMERATION_STEP_CAP: usize = 24;

fn apply_crashes<S: System>(
    sys: &mut S,
    faults: &FaultPlan,
    crashed: &mut Vec<Pid>,
    step: u64,
    sink: &mut TraceSink,
) {
    for (&pid, &at) in &faults.crashes {
        if at == step && !crashed.contains(&pid) {
            crashed.push(pid);
            sink.emit(pid, EventKind::Crash);
            sys.crash(pid, sink);
        }
    }
}

/// Runs `sys` to quiescence (or the step bound) under `policy`.
///
/// The result is a pure function of (system, policy, seed, faults): the
/// same inputs produce a byte-identical trace.
pub fn run<S: System>(
    mut sys: S,
    policy: &Policy,
    seed: u64,
    faults: &FaultPlan,
    step_bound: u64,
    scenario_name: &str,
) -> Result<Trace, EngineError> {
    let mut sink = TraceSink::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crashed = Vec::new();
    let mut steps: u64 = 0;
    let mut script_pos = 0usize;

    let outcome = loop {
        apply_crashes(&mut sys, faults, &mut crashed, steps, &mut sink);
        let enabled = sys.enabled();
        if enabled.is_empty() {
            break Outcome::Quiescent;
        }
        if steps >= step_bound {
            break Outcome::StepBoundExceeded;
        }
        let key = match policy {
            Policy::FairRandom { .. } => *enabled.choose(&mut rng).expect("non-empty"),
            Policy::Scripted { choices } => {
                let Some(&idx) = choices.get(script_pos) else {
                    break Outcome::Quiescent;
                };
                script_pos += 1;
                enabled[idx % enabled.len()]
            }
            Policy::Exhaustive { .. } => return Err(EngineError::NotRunnable("exhaustive")),
        };
        sys.step(key, &mut sink);
        steps += 1;
    };

    Ok(sink.into_trace(scenario_name, seed, outcome, steps))
}

/// Depth-first enumeration of every interleaving of `sys` up to
/// `max_steps` total steps, yielding one trace per maximal schedule.
///
/// Each trace corresponds to exactly one sequence of choices; schedules
/// are explored in canonical order, so the stream is deterministic.
pub fn enumerate<S: System>(
    sys: S,
    faults: &FaultPlan,
    max_steps: usize,
    scenario_name: &str,
) -> Result<Enumerate<S>, EngineError> {
    if max_steps > ENUMERATION_STEP_CAP {
        return Err(EngineError::BoundExceeded(ENUMERATION_STEP_CAP));
    }
    Ok(Enumerate {
        stack: vec![Frame {
            sys,
            sink: TraceSink::new(),
            crashed: Vec::new(),
            steps: 0,
        }],
        faults: faults.clone(),
        max_steps,
        scenario_name: scenario_name.to_string(),
    })
}

struct Frame<S> {
    sys: S,
    sink: TraceSink,
    crashed: Vec<Pid>,
    steps: u64,
}

/// Iterator over all interleavings; see [`enumerate`].
pub struct Enumerate<S> {
    stack: Vec<Frame<S>>,
    faults: FaultPlan,
    max_steps: usize,
    scenario_name: String,
}

impl<S: System> Iterator for Enumerate<S> {
    type Item = Trace;

    fn next(&mut self) -> Option<Trace> {
        while let Some(mut frame) = self.stack.pop() {
            apply_crashes(
                &mut frame.sys,
                &self.faults,
                &mut frame.crashed,
                frame.steps,
                &mut frame.sink,
            );
            let enabled = frame.sys.enabled();
            if enabled.is_empty() {
                return Some(frame.sink.into_trace(
                    &self.scenario_name,
                    0,
                    Outcome::Quiescent,
                    frame.steps,
                ));
            }
            if frame.steps as usize >= self.max_steps {
                return Some(frame.sink.into_trace(
                    &self.scenario_name,
                    0,
                    Outcome::StepBoundExceeded,
                    frame.steps,
                ));
            }
            // Push branches in reverse so canonical order pops first.
            for &key in enabled.iter().rev() {
                let mut sys = frame.sys.clone();
                let mut sink = frame.sink.clone();
                sys.step(key, &mut sink);
                self.stack.push(Frame {
                    sys,
                    sink,
                    crashed: frame.crashed.clone(),
                    steps: frame.steps + 1,
                });
            }
        }
        None
    }
}
