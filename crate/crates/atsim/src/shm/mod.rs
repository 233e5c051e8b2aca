//! Shared-memory model: linearizable primitives and the three algorithms
//! built on them.
//!
//! - [`snapshot_transfer`]: wait-free transfer/read for single-owner
//!   accounts over one atomic snapshot; no consensus anywhere.
//! - [`transfer_consensus`]: consensus among the `k` owners of one shared
//!   account, using nothing but registers and that account: the balance
//!   left by the single successful withdrawal identifies the winner.
//! - [`shared_transfer`]: transfer for accounts with up to `k` owners,
//!   driven by per-account rounds of capacity-`k` consensus objects.

pub mod primitives;
pub mod shared_transfer;
pub mod snapshot_transfer;
pub mod threaded_transfer;
pub mod transfer_consensus;

pub use primitives::{AtomicSnapshot, KConsensus, Register, ShmError};
pub use shared_transfer::SharedTransferSystem;
pub use snapshot_transfer::SnapshotTransferSystem;
pub use threaded_transfer::{SharedWorld, TimedResponse, TransferProcess};
pub use transfer_consensus::TransferConsensusSystem;
