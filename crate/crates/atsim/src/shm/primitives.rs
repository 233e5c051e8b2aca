//! Linearizable shared-memory primitives: single-writer registers, atomic
//! snapshot, and capacity-bounded consensus.
//!
//! Each primitive exists in two forms with one contract:
//!
//! - the plain structs here, used in simulation mode where the scheduler
//!   makes every method call one atomic step;
//! - [`threaded`] wrappers that serialize concurrent calls through a mutex,
//!   for driving the same algorithms from real threads.
//!
//! The snapshot is a primitive here, not a register construction: one
//! `update`/`snapshot` call is one atomic action.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Pid;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShmError {
    #[error("{writer} is the designated writer, not {caller}")]
    NotWriter { writer: Pid, caller: Pid },
}

/// Single-writer multi-reader register. Reads return the latest linearized
/// write, or `None` before the first write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register<T> {
    writer: Pid,
    value: Option<T>,
}

impl<T: Clone> Register<T> {
    pub fn new(writer: Pid) -> Self {
        Self {
            writer,
            value: None,
        }
    }

    pub fn write(&mut self, p: Pid, value: T) -> Result<(), ShmError> {
        if p != self.writer {
            return Err(ShmError::NotWriter {
                writer: self.writer,
                caller: p,
            });
        }
        self.value = Some(value);
        Ok(())
    }

    pub fn read(&self) -> Option<T> {
        self.value.clone()
    }
}

/// `N`-cell array with per-cell `update` and whole-array `snapshot`, both
/// atomic. Cell `p` is written only by process `p`; cells start empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicSnapshot<T> {
    cells: Vec<Option<T>>,
}

impl<T: Clone> AtomicSnapshot<T> {
    pub fn new(n: usize) -> Self {
        Self {
            cells: vec![None; n],
        }
    }

    /// Index of the cell owned by `p` (pids are 1-based).
    fn cell_index(p: Pid) -> usize {
        (p.0 - 1) as usize
    }

    pub fn update(&mut self, p: Pid, value: T) {
        let idx = Self::cell_index(p);
        self.cells[idx] = Some(value);
    }

    pub fn snapshot(&self) -> Vec<Option<T>> {
        self.cells.clone()
    }

    pub fn cell(&self, p: Pid) -> Option<&T> {
        self.cells[Self::cell_index(p)].as_ref()
    }
}

/// Consensus object with capacity `k`: the first `k` `propose` calls return
/// the argument of the first call; later calls return `None`.
///
/// The object keeps counting past its capacity even if callers misbehave,
/// so a caller-discipline violation is observable rather than silent:
/// `over_invoked` latches and the excess call count is queryable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KConsensus<T> {
    capacity: usize,
    decided: Option<T>,
    invocations: usize,
}

impl<T: Clone> KConsensus<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            decided: None,
            invocations: 0,
        }
    }

    pub fn propose(&mut self, value: T) -> Option<T> {
        self.invocations += 1;
        if self.invocations > self.capacity {
            return None;
        }
        if self.decided.is_none() {
            self.decided = Some(value);
        }
        self.decided.clone()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn invocations(&self) -> usize {
        self.invocations
    }

    pub fn over_invoked(&self) -> bool {
        self.invocations > self.capacity
    }
}

/// Mutex-backed wrappers giving the same primitives a thread-safe surface.
pub mod threaded {
    use super::*;

    /// Single-writer register safe for concurrent invocation.
    #[derive(Debug)]
    pub struct SharedRegister<T> {
        inner: Mutex<Register<T>>,
    }

    impl<T: Clone> SharedRegister<T> {
        pub fn new(writer: Pid) -> Self {
            Self {
                inner: Mutex::new(Register::new(writer)),
            }
        }

        pub fn write(&self, p: Pid, value: T) -> Result<(), ShmError> {
            self.inner.lock().unwrap().write(p, value)
        }

        pub fn read(&self) -> Option<T> {
            self.inner.lock().unwrap().read()
        }
    }

    /// Atomic snapshot safe for concurrent invocation.
    #[derive(Debug)]
    pub struct SharedSnapshot<T> {
        inner: Mutex<AtomicSnapshot<T>>,
    }

    impl<T: Clone> SharedSnapshot<T> {
        pub fn new(n: usize) -> Self {
            Self {
                inner: Mutex::new(AtomicSnapshot::new(n)),
            }
        }

        pub fn update(&self, p: Pid, value: T) {
            self.inner.lock().unwrap().update(p, value);
        }

        pub fn snapshot(&self) -> Vec<Option<T>> {
            self.inner.lock().unwrap().snapshot()
        }
    }

    /// Capacity-bounded consensus safe for concurrent invocation.
    #[derive(Debug)]
    pub struct SharedKConsensus<T> {
        inner: Mutex<KConsensus<T>>,
    }

    impl<T: Clone> SharedKConsensus<T> {
        pub fn new(capacity: usize) -> Self {
            Self {
                inner: Mutex::new(KConsensus::new(capacity)),
            }
        }

        pub fn propose(&self, value: T) -> Option<T> {
            self.inner.lock().unwrap().propose(value)
        }

        pub fn over_invoked(&self) -> bool {
            self.inner.lock().unwrap().over_invoked()
        }
    }
}
