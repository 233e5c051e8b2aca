//! Domain types and the sequential specification of the asset-transfer
//! object type.
//!
//! An asset-transfer object holds a balance per account. `transfer(a, b, x)`
//! invoked by process `p` succeeds iff `p` owns `a` and `a` holds at least
//! `x`; on success `x` moves from `a` to `b`. `read(a)` returns the balance
//! of `a` and changes nothing. [`seq_step`] is the executable form of that
//! transition relation and serves as the oracle for every consistency check
//! in this crate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Account identifier, unique within a scenario.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AccountId(pub u32);

/// Process identifier, in `1..=N` for a system of `N` processes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Pid(pub u32);

/// A non-negative quantity of currency units. All arithmetic is checked;
/// amounts never wrap.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Amount(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("arithmetic overflow")]
    ArithmeticOverflow,
}

/// Maps each account to the set of processes allowed to debit it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipMap {
    owners: BTreeMap<AccountId, BTreeSet<Pid>>,
}

impl OwnershipMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_owners(&mut self, account: AccountId, owners: impl IntoIterator<Item = Pid>) {
        self.owners.insert(account, owners.into_iter().collect());
    }

    /// Whether `p` may debit `account`.
    pub fn owns(&self, p: Pid, account: AccountId) -> bool {
        self.owners.get(&account).is_some_and(|s| s.contains(&p))
    }

    pub fn owners_of(&self, account: AccountId) -> BTreeSet<Pid> {
        self.owners.get(&account).cloned().unwrap_or_default()
    }

    /// The maximal number of processes sharing one account (the object's
    /// consensus number).
    pub fn max_sharing(&self) -> usize {
        self.owners.values().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn accounts(&self) -> impl Iterator<Item = AccountId> + '_ {
        self.owners.keys().copied()
    }
}

/// Balance per account. Total on the account set; balances never go
/// negative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    balances: BTreeMap<AccountId, Amount>,
}

impl LedgerState {
    pub fn new(balances: impl IntoIterator<Item = (AccountId, Amount)>) -> Self {
        Self {
            balances: balances.into_iter().collect(),
        }
    }

    pub fn balance(&self, account: AccountId) -> Result<Amount, LedgerError> {
        self.balances
            .get(&account)
            .copied()
            .ok_or(LedgerError::UnknownAccount(account))
    }

    pub fn contains(&self, account: AccountId) -> bool {
        self.balances.contains_key(&account)
    }

    pub fn accounts(&self) -> impl Iterator<Item = AccountId> + '_ {
        self.balances.keys().copied()
    }

    /// Sum of all balances; the conserved quantity.
    pub fn total(&self) -> Result<Amount, LedgerError> {
        let mut sum: u64 = 0;
        for amount in self.balances.values() {
            sum = sum
                .checked_add(amount.0)
                .ok_or(LedgerError::ArithmeticOverflow)?;
        }
        Ok(Amount(sum))
    }

    fn set(&mut self, account: AccountId, amount: Amount) {
        self.balances.insert(account, amount);
    }
}

/// An invocation of the asset-transfer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: Amount,
    },
    Read {
        account: AccountId,
    },
}

/// A response of the asset-transfer type: `Bool` for transfers, `Balance`
/// for reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Bool(bool),
    Balance(Amount),
}

/// One money movement plus identity metadata. The `uid` (issuer, per-issuer
/// counter) keeps repeated transfers of the same triple distinct under set
/// semantics, so balances stay counter-like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransferRecord {
    pub source: AccountId,
    pub dest: AccountId,
    pub amount: Amount,
    pub issuer: Pid,
    pub uid: (Pid, u64),
}

impl TransferRecord {
    pub fn new(source: AccountId, dest: AccountId, amount: Amount, issuer: Pid, seq: u64) -> Self {
        Self {
            source,
            dest,
            amount,
            issuer,
            uid: (issuer, seq),
        }
    }
}

/// Applies one operation to `state` per the sequential transition relation,
/// returning the new state and the response.
///
/// A transfer succeeds iff the invoking process owns the source account and
/// the source balance covers the amount; otherwise it returns `false` and
/// leaves the state untouched. Self-transfers are permitted: the net effect
/// is no change, but success still requires sufficient balance.
pub fn seq_step(
    state: &LedgerState,
    p: Pid,
    op: Operation,
    mu: &OwnershipMap,
) -> Result<(LedgerState, Response), LedgerError> {
    match op {
        Operation::Transfer { from, to, amount } => {
            let from_balance = state.balance(from)?;
            let to_balance = state.balance(to)?;
            if !mu.owns(p, from) || from_balance < amount {
                return Ok((state.clone(), Response::Bool(false)));
            }
            let mut next = state.clone();
            if from == to {
                // Debit and credit cancel; balance already checked.
                return Ok((next, Response::Bool(true)));
            }
            next.set(from, Amount(from_balance.0 - amount.0));
            let credited = to_balance
                .0
                .checked_add(amount.0)
                .ok_or(LedgerError::ArithmeticOverflow)?;
            next.set(to, Amount(credited));
            Ok((next, Response::Bool(true)))
        }
        Operation::Read { account } => {
            let balance = state.balance(account)?;
            Ok((state.clone(), Response::Balance(balance)))
        }
    }
}

/// Account balance implied by a set of successful transfer records: the
/// initial balance plus incoming amounts minus outgoing amounts.
///
/// The result is signed so callers can detect record sets that a correct
/// protocol must never produce (a negative value flags an illegal set).
pub fn balance_of<'a>(
    account: AccountId,
    records: impl IntoIterator<Item = &'a TransferRecord>,
    q0: &LedgerState,
) -> Result<i128, LedgerError> {
    let mut total = i128::from(q0.balance(account)?.0);
    for record in records {
        if record.dest == account {
            total = total
                .checked_add(i128::from(record.amount.0))
                .ok_or(LedgerError::ArithmeticOverflow)?;
        }
        if record.source == account {
            total = total
                .checked_sub(i128::from(record.amount.0))
                .ok_or(LedgerError::ArithmeticOverflow)?;
        }
    }
    Ok(total)
}

/// Whether a complete sequential history is legal: replaying it from `q0`
/// with [`seq_step`] must reproduce every recorded response. Malformed
/// input (unknown accounts, overflow) yields `false`.
pub fn replay_legal(
    seq: &[(Pid, Operation, Response)],
    q0: &LedgerState,
    mu: &OwnershipMap,
) -> bool {
    let mut state = q0.clone();
    for &(p, op, response) in seq {
        match seq_step(&state, p, op, mu) {
            Ok((next, expected)) if expected == response => state = next,
            _ => return false,
        }
    }
    true
}
