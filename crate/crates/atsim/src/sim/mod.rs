//! Deterministic discrete-event simulation: scenario description, the
//! scheduler, and execution traces.

pub mod engine;
pub mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid};

pub use engine::{enumerate, run, Enumerate, EngineError, EventKey, Policy, System};
pub use trace::{DiagCode, EventKind, OpId, Outcome, StreamId, Trace, TraceEvent, TraceSink};

/// Adversarial behavior of a process in the message-passing model. Every
/// strategy acts below the broadcast API by fabricating, omitting, or
/// duplicating wire messages; benign node state is never touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzStrategy {
    /// Send differing payloads for the same (sender, seq) slot to disjoint
    /// peer subsets: the canonical double-spend attempt quorum broadcast
    /// must neutralize.
    Equivocate,
    /// Issue two sequentially numbered transfers that together overdraw
    /// the account; the second must be rejected everywhere.
    DoubleSpendRace,
    /// Broadcast with a gap in the sequence numbers.
    BadSeq,
    /// Issue a transfer debiting an account the process does not own.
    ForgeOwner,
    /// Cite fabricated dependencies that no process can ever validate.
    StaleDeps,
    /// Do nothing at all.
    Silent,
}

/// Crash points and Byzantine assignments for one run. A process is
/// crashed or Byzantine, never both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Process -> scheduler step at which it halts.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub crashes: BTreeMap<Pid, u64>,
    /// Process -> adversarial strategy (message-passing model only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub byzantine: BTreeMap<Pid, ByzStrategy>,
}

impl FaultPlan {
    pub fn is_byzantine(&self, p: Pid) -> bool {
        self.byzantine.contains_key(&p)
    }
}

/// Which class of algorithm a scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    SharedMemory,
    MessagePassing,
}

/// Protocol under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Wait-free single-owner transfer over an atomic snapshot.
    SnapshotTransfer,
    /// Consensus among the k owners of one shared account.
    TransferConsensus,
    /// k-shared transfer built from capacity-k consensus objects.
    SharedTransfer,
    /// Broadcast-based transfer in the Byzantine message-passing model.
    BroadcastTransfer,
    /// Total-order baseline: one sequencer node orders all transfers.
    SequencerBaseline,
}

/// How broadcast is realized in message-passing scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastMode {
    /// Trusted oracle: the four broadcast properties hold by construction.
    Idealized,
    /// Echo-quorum protocol tolerating up to `f` Byzantine processes.
    Quorum { f: u32 },
    /// Unprotected per-peer channels; negative-control mode in which
    /// adversaries can violate the broadcast properties.
    Raw,
}

/// Behavior of a shared account's sequence-number service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceMode {
    /// Assigns monotonically increasing numbers with valid owner-quorum
    /// certificates.
    Correct,
    /// Never answers; transfers on the account hang by design.
    Stalled,
    /// Assigns the same number to conflicting transfers (compromised
    /// owner quorum).
    Equivocating,
}

/// Deliberate implementation bugs used to validate the checkers: a run
/// with a bug injected must be caught by at least one verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedBug {
    /// Validation applies transfers without checking the balance.
    SkipBalanceCheck,
    /// Validation applies transfers without checking sequence continuity.
    SkipSeqCheck,
}

/// Knobs with sensible defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    /// Whether the validation balance check counts the message's attached
    /// dependencies alongside the validated history. The strict variant
    /// (false) rejects transfers funded by their own dependency set.
    pub validation_balance_includes_deps: bool,
    /// Deliberately broken validation for checker self-tests.
    pub injected_bug: Option<InjectedBug>,
    /// Scheduler step cap for a single run.
    pub step_bound: u64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            validation_balance_includes_deps: true,
            injected_bug: None,
            step_bound: engine::DEFAULT_STEP_BOUND,
        }
    }
}

/// One account's initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub id: AccountId,
    pub balance: Amount,
    /// Processes allowed to debit the account. Empty = pure sink.
    #[serde(default)]
    pub owners: Vec<Pid>,
    /// Ordering service for accounts with more than one owner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceMode>,
}

/// A complete, reproducible experiment description. Everything a run does
/// is a function of (scenario, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: u32,
    pub accounts: Vec<AccountSpec>,
    pub model: Model,
    pub algorithm: Algorithm,
    /// Per-process operation scripts. For Byzantine processes each entry
    /// is one attack volley; its transfer parameters seed the attack.
    #[serde(default)]
    pub scripts: BTreeMap<Pid, Vec<Operation>>,
    /// Proposals for `TransferConsensus` scenarios.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub proposals: BTreeMap<Pid, u64>,
    #[serde(default)]
    pub faults: FaultPlan,
    pub policy: Policy,
    #[serde(default = "default_broadcast")]
    pub broadcast: BroadcastMode,
    /// Sequencer node for the baseline algorithm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequencer: Option<Pid>,
    #[serde(default)]
    pub options: ScenarioOptions,
}

fn default_broadcast() -> BroadcastMode {
    BroadcastMode::Idealized
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario json: {0}")]
    Parse(String),
    #[error("pid {0} out of range 1..={1}")]
    PidRange(Pid, u32),
    #[error("account {0} duplicated")]
    DuplicateAccount(AccountId),
    #[error("script references unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("quorum mode requires n > 3f, got n={n} f={f}")]
    QuorumBound { n: u32, f: u32 },
    #[error("process {0} is both crashed and byzantine")]
    ConflictingFault(Pid),
    #[error("byzantine strategies only apply to the message-passing model")]
    ByzantineInSharedMemory,
    #[error("{0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn q0(&self) -> LedgerState {
        LedgerState::new(self.accounts.iter().map(|a| (a.id, a.balance)))
    }

    pub fn ownership(&self) -> OwnershipMap {
        let mut mu = OwnershipMap::new();
        for account in &self.accounts {
            mu.set_owners(account.id, account.owners.iter().copied());
        }
        mu
    }

    pub fn pids(&self) -> impl Iterator<Item = Pid> + '_ {
        (1..=self.n).map(Pid)
    }

    /// Single-owner account of a process in the message-passing model,
    /// if it has one.
    pub fn account_of(&self, p: Pid) -> Option<AccountId> {
        self.accounts
            .iter()
            .find(|a| a.owners == [p])
            .map(|a| a.id)
    }

    pub fn service_mode(&self, account: AccountId) -> ServiceMode {
        self.accounts
            .iter()
            .find(|a| a.id == account)
            .and_then(|a| a.service)
            .unwrap_or(ServiceMode::Correct)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 {
            return Err(ScenarioError::Invalid("n must be positive".into()));
        }
        let mut seen = Vec::new();
        for account in &self.accounts {
            if seen.contains(&account.id) {
                return Err(ScenarioError::DuplicateAccount(account.id));
            }
            seen.push(account.id);
            for &owner in &account.owners {
                if owner.0 == 0 || owner.0 > self.n {
                    return Err(ScenarioError::PidRange(owner, self.n));
                }
            }
        }
        for (&pid, ops) in &self.scripts {
            if pid.0 == 0 || pid.0 > self.n {
                return Err(ScenarioError::PidRange(pid, self.n));
            }
            for op in ops {
                let touched: &[AccountId] = match op {
                    Operation::Transfer { from, to, .. } => &[*from, *to],
                    Operation::Read { account } => &[*account],
                };
                for a in touched {
                    if !seen.contains(a) {
                        return Err(ScenarioError::UnknownAccount(*a));
                    }
                }
            }
        }
        if let BroadcastMode::Quorum { f } = self.broadcast {
            if self.model == Model::MessagePassing && self.n <= 3 * f {
                return Err(ScenarioError::QuorumBound { n: self.n, f });
            }
        }
        for &pid in self.faults.byzantine.keys() {
            if self.faults.crashes.contains_key(&pid) {
                return Err(ScenarioError::ConflictingFault(pid));
            }
            if self.model == Model::SharedMemory {
                return Err(ScenarioError::ByzantineInSharedMemory);
            }
        }
        if self.model == Model::MessagePassing {
            // The per-sender broadcast stream doubles as the account's
            // sequence-number stream, which needs at most one single-owner
            // account per process.
            for p in self.pids() {
                let solo = self
                    .accounts
                    .iter()
                    .filter(|a| a.owners == [p])
                    .count();
                if solo > 1 {
                    return Err(ScenarioError::Invalid(format!(
                        "{p} owns {solo} single-owner accounts; at most one is supported"
                    )));
                }
            }
        }
        if self.algorithm == Algorithm::TransferConsensus && self.proposals.is_empty() {
            return Err(ScenarioError::Invalid(
                "transfer_consensus needs proposals".into(),
            ));
        }
        if self.algorithm == Algorithm::SequencerBaseline && self.sequencer.is_none() {
            return Err(ScenarioError::Invalid(
                "sequencer_baseline needs a sequencer pid".into(),
            ));
        }
        Ok(())
    }

    /// Processes that are not Byzantine (they may still crash).
    pub fn benign(&self) -> Vec<Pid> {
        self.pids()
            .filter(|p| !self.faults.is_byzantine(*p))
            .collect()
    }

    /// Processes that are neither Byzantine nor crashed.
    pub fn correct(&self) -> Vec<Pid> {
        self.pids()
            .filter(|p| !self.faults.is_byzantine(*p) && !self.faults.crashes.contains_key(p))
            .collect()
    }
}
