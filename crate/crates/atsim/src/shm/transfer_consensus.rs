//! Consensus among `k` processes from one `k`-shared account and plain
//! registers.
//!
//! Every participant `p` in `1..=k` announces its proposal in register
//! `R[p]`, then tries to withdraw `2k - p` from a shared account that
//! starts at `2k` (everyone owns it) into a sink. Any two withdrawal
//! amounts sum past `2k` and the account receives nothing, so exactly one
//! withdrawal ever succeeds, and after it the balance equals the winner's
//! process id. Reading the balance therefore names the winner; reading the
//! winner's register yields the decided value.
//!
//! The shared account is an atomic asset-transfer object here: one
//! transfer or read is one linearized step.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ledger::{seq_step, AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, Response};
use crate::shm::primitives::Register;
use crate::sim::engine::{EventKey, System};
use crate::sim::trace::{DiagCode, EventKind, TraceSink};

/// The shared account everyone withdraws from.
pub const SHARED_ACCOUNT: AccountId = AccountId(1);
/// The sink; never debited, needs no owner.
pub const SINK_ACCOUNT: AccountId = AccountId(2);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusSetupError {
    #[error("k must be at least 1")]
    ZeroParticipants,
    #[error("process {0} has no proposal")]
    MissingProposal(Pid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Announce,
    Withdraw,
    ReadBalance,
    ReadWinner { winner: Pid },
    Done,
}

#[derive(Debug, Clone)]
struct Participant {
    pid: Pid,
    proposal: u64,
    phase: Phase,
    transfer_won: Option<bool>,
    decided: Option<u64>,
    steps_taken: u32,
}

/// One run's state: registers, the shared atomic asset-transfer object,
/// and each participant's position in the three-line algorithm.
#[derive(Debug, Clone)]
pub struct TransferConsensusSystem {
    k: u32,
    registers: Vec<Register<u64>>,
    ledger: LedgerState,
    mu: OwnershipMap,
    participants: Vec<Participant>,
    crashed: BTreeSet<Pid>,
}

impl TransferConsensusSystem {
    /// Builds the world for `proposals.len()` participants with pids
    /// `1..=k`; the withdrawal-amount encoding depends on exactly that
    /// pid range.
    pub fn new(proposals: &[(Pid, u64)]) -> Result<Self, ConsensusSetupError> {
        let k = proposals.len() as u32;
        if k == 0 {
            return Err(ConsensusSetupError::ZeroParticipants);
        }
        let mut participants = Vec::new();
        for expect in 1..=k {
            let &(pid, proposal) = proposals
                .iter()
                .find(|(p, _)| *p == Pid(expect))
                .ok_or(ConsensusSetupError::MissingProposal(Pid(expect)))?;
            participants.push(Participant {
                pid,
                proposal,
                phase: Phase::Announce,
                transfer_won: None,
                decided: None,
                steps_taken: 0,
            });
        }
        let ledger = LedgerState::new([
            (SHARED_ACCOUNT, Amount(2 * u64::from(k))),
            (SINK_ACCOUNT, Amount(0)),
        ]);
        let mut mu = OwnershipMap::new();
        mu.set_owners(SHARED_ACCOUNT, (1..=k).map(Pid));
        Ok(Self {
            k,
            registers: (1..=k).map(|i| Register::new(Pid(i))).collect(),
            ledger,
            mu,
            participants,
            crashed: BTreeSet::new(),
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Decisions reached so far, by pid.
    pub fn decisions(&self) -> Vec<(Pid, Option<u64>)> {
        self.participants
            .iter()
            .map(|p| (p.pid, p.decided))
            .collect()
    }

    /// Balance currently on the shared account.
    pub fn shared_balance(&self) -> u64 {
        self.ledger.balance(SHARED_ACCOUNT).unwrap().0
    }

    /// The unique participant whose withdrawal succeeded, if any yet.
    pub fn winner(&self) -> Option<Pid> {
        let winners: Vec<Pid> = self
            .participants
            .iter()
            .filter(|p| p.transfer_won == Some(true))
            .map(|p| p.pid)
            .collect();
        match winners.as_slice() {
            [single] => Some(*single),
            [] => None,
            _ => unreachable!("at most one withdrawal can succeed"),
        }
    }

    /// Upper bound on scheduler steps any participant needs (wait-freedom).
    pub const STEPS_PER_PROCESS: u32 = 4;
}

impl System for TransferConsensusSystem {
    fn enabled(&self) -> Vec<EventKey> {
        self.participants
            .iter()
            .filter(|p| !self.crashed.contains(&p.pid) && p.phase != Phase::Done)
            .map(|p| EventKey::Proc(p.pid))
            .collect()
    }

    fn step(&mut self, key: EventKey, sink: &mut TraceSink) {
        let EventKey::Proc(pid) = key else {
            return;
        };
        let idx = (pid.0 - 1) as usize;
        let phase = self.participants[idx].phase;
        self.participants[idx].steps_taken += 1;
        match phase {
            Phase::Announce => {
                let value = self.participants[idx].proposal;
                sink.emit(pid, EventKind::ConsInvoke { value });
                self.registers[idx]
                    .write(pid, value)
                    .expect("own register");
                sink.emit(
                    pid,
                    EventKind::MemStep {
                        access: "reg_write".into(),
                    },
                );
                self.participants[idx].phase = Phase::Withdraw;
            }
            Phase::Withdraw => {
                let amount = Amount(2 * u64::from(self.k) - u64::from(pid.0));
                let op = Operation::Transfer {
                    from: SHARED_ACCOUNT,
                    to: SINK_ACCOUNT,
                    amount,
                };
                let (next, response) =
                    seq_step(&self.ledger, pid, op, &self.mu).expect("accounts exist");
                self.ledger = next;
                let won = response == Response::Bool(true);
                self.participants[idx].transfer_won = Some(won);
                sink.emit(
                    pid,
                    EventKind::MemStep {
                        access: format!("at_transfer won={won}"),
                    },
                );
                self.participants[idx].phase = Phase::ReadBalance;
            }
            Phase::ReadBalance => {
                let balance = self.shared_balance();
                sink.emit(
                    pid,
                    EventKind::MemStep {
                        access: format!("at_read balance={balance}"),
                    },
                );
                // Some withdrawal has applied by now, so the balance is the
                // winner's pid.
                self.participants[idx].phase = Phase::ReadWinner {
                    winner: Pid(balance as u32),
                };
            }
            Phase::ReadWinner { winner } => {
                let value = self
                    .registers
                    .get((winner.0.wrapping_sub(1)) as usize)
                    .and_then(|r| r.read());
                sink.emit(
                    pid,
                    EventKind::MemStep {
                        access: "reg_read".into(),
                    },
                );
                match value {
                    Some(value) => {
                        self.participants[idx].decided = Some(value);
                        sink.emit(
                            pid,
                            EventKind::ConsDecide {
                                value,
                                winner_balance: u64::from(winner.0),
                                own_transfer_won: self.participants[idx].transfer_won
                                    == Some(true),
                            },
                        );
                    }
                    None => sink.emit(
                        pid,
                        EventKind::Diag {
                            code: DiagCode::Note,
                            detail: format!("winner register {winner} empty"),
                        },
                    ),
                }
                self.participants[idx].phase = Phase::Done;
            }
            Phase::Done => {}
        }
    }

    fn crash(&mut self, p: Pid, _sink: &mut TraceSink) {
        self.crashed.insert(p);
    }
}
