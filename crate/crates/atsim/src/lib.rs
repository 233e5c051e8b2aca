//! Consensus-free asset transfer: protocols, simulator, and checkers.
//!
//! An asset-transfer object (accounts, balances, owner-gated transfers) can
//! be implemented without consensus when each account has a single owner,
//! and with agreement only among the `k` owners of an account when accounts
//! are shared. This crate implements those protocols in two models and the
//! machinery to verify them:
//!
//! - [`ledger`]: domain types and the sequential specification every
//!   checker replays against.
//! - [`shm`]: linearizable shared-memory primitives (single-writer
//!   registers, atomic snapshot, capacity-bounded consensus) and the three
//!   shared-memory algorithms: wait-free single-owner transfer over a
//!   snapshot, consensus among `k` owners from one shared account, and
//!   `k`-shared transfer driven by rounds of capacity-`k` consensus.
//! - [`broadcast`]: secure broadcast (integrity, agreement, validity,
//!   source order) as an idealized oracle and as an echo-quorum protocol,
//!   plus the account-order variant for shared accounts.
//! - [`mp`]: the Byzantine message-passing transfer protocol over secure
//!   broadcast, its sequence-number service extension for shared accounts,
//!   adversarial node strategies, and a total-order sequencer baseline.
//! - [`sim`]: deterministic discrete-event simulator: seeded fair
//!   scheduling, exhaustive interleaving enumeration, fault injection,
//!   structured traces.
//! - [`checker`]: linearizability search against the sequential
//!   specification, the relaxed two-part correctness check for message
//!   passing, and online trace monitors.
//! - [`runner`]: scenario loading, verdict aggregation, metrics, and the
//!   entry points behind the `atsim` binary.
//!
//! The `examples/` directory shows one runnable program per capability;
//! `atsim run|sweep|baseline` drives bundled or user-provided scenarios.

pub mod broadcast;
pub mod checker;
pub mod ledger;
pub mod metrics;
pub mod mp;
pub mod runner;
pub mod shm;
pub mod sim;

pub use ledger::{
    balance_of, replay_legal, seq_step, AccountId, Amount, LedgerError, LedgerState, Operation,
    OwnershipMap, Pid, Response, TransferRecord,
};
