//! Real-thread mode for the snapshot transfer algorithm: the same
//! per-process logic as the simulated machine, driven by OS threads over
//! the mutex-backed snapshot. Responses carry entry/exit timestamps from a
//! shared logical clock so a history can be assembled and checked.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::ledger::{
    balance_of, AccountId, Amount, LedgerState, OwnershipMap, Pid, Response, TransferRecord,
};
use crate::shm::primitives::threaded::SharedSnapshot;

/// Shared side: the snapshot object plus the world constants and a logical
/// clock for timestamping.
#[derive(Debug)]
pub struct SharedWorld {
    snapshot: SharedSnapshot<BTreeSet<TransferRecord>>,
    q0: LedgerState,
    mu: OwnershipMap,
    clock: AtomicU64,
}

impl SharedWorld {
    pub fn new(n: u32, q0: LedgerState, mu: OwnershipMap) -> Arc<Self> {
        Arc::new(Self {
            snapshot: SharedSnapshot::new(n as usize),
            q0,
            mu,
            clock: AtomicU64::new(0),
        })
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    fn balance(&self, account: AccountId, cells: &[Option<BTreeSet<TransferRecord>>]) -> i128 {
        balance_of(account, cells.iter().flatten().flatten(), &self.q0).unwrap_or(i128::MIN)
    }
}

/// A response with the operation's real-time span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedResponse {
    pub response: Response,
    pub invoke_step: u64,
    pub respond_step: u64,
}

/// One process's handle: owns the process-local record mirror. Not shared
/// between threads; each participating thread holds its own.
#[derive(Debug)]
pub struct TransferProcess {
    pid: Pid,
    world: Arc<SharedWorld>,
    mirror: BTreeSet<TransferRecord>,
    issued: u64,
}

impl TransferProcess {
    pub fn new(pid: Pid, world: Arc<SharedWorld>) -> Self {
        Self {
            pid,
            world,
            mirror: BTreeSet::new(),
            issued: 0,
        }
    }

    pub fn transfer(&mut self, from: AccountId, to: AccountId, amount: Amount) -> TimedResponse {
        let invoke_step = self.world.tick();
        let cells = self.world.snapshot.snapshot();
        let funded = self.world.balance(from, &cells) >= i128::from(amount.0);
        let response = if !self.world.mu.owns(self.pid, from) || !funded {
            Response::Bool(false)
        } else {
            let record = TransferRecord::new(from, to, amount, self.pid, self.issued);
            self.issued += 1;
            self.mirror.insert(record);
            self.world.snapshot.update(self.pid, self.mirror.clone());
            Response::Bool(true)
        };
        TimedResponse {
            response,
            invoke_step,
            respond_step: self.world.tick(),
        }
    }

    pub fn read(&mut self, account: AccountId) -> TimedResponse {
        let invoke_step = self.world.tick();
        let cells = self.world.snapshot.snapshot();
        let balance = self.world.balance(account, &cells).max(0) as u64;
        TimedResponse {
            response: Response::Balance(Amount(balance)),
            invoke_step,
            respond_step: self.world.tick(),
        }
    }
}
