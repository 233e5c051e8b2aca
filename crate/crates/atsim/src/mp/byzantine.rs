//! Adversarial nodes.
//!
//! Byzantine behavior happens strictly below the broadcast API: these
//! nodes fabricate, split, and replay wire messages, and collude by
//! acknowledging each other's envelopes, but they never touch benign node
//! state. Each scripted operation triggers one attack volley whose
//! transfer parameters seed the attack.

use std::collections::{BTreeMap, BTreeSet};

use crate::broadcast::{Authenticator, Digest, Envelope, SeqCert, WireMsg};
use crate::ledger::{
    AccountId, Amount, LedgerState, Operation, OwnershipMap, Pid, TransferRecord,
};
use crate::sim::trace::StreamId;
use crate::sim::{BroadcastMode, ByzStrategy};

use super::{record_binding, TransferMsg};

/// What a volley produced: raw wire messages and, in idealized mode,
/// oracle submissions (which the trusted layer may suppress).
#[derive(Debug, Clone, Default)]
pub struct ByzEmission {
    pub wires: Vec<(Pid, WireMsg<TransferMsg>)>,
    pub oracle: Vec<Envelope<TransferMsg>>,
}

#[derive(Debug, Clone)]
pub struct ByzNode {
    me: Pid,
    strategy: ByzStrategy,
    n: u32,
    mode: BroadcastMode,
    auth: Authenticator,
    colluders: BTreeSet<Pid>,
    q0: LedgerState,
    mu: OwnershipMap,
    /// Own stream position for protocol-shaped volleys.
    next_seq: u64,
    /// Per shared account: duplicate slot counter for self-made
    /// certificates.
    shared_seq: BTreeMap<AccountId, u64>,
    /// Sender-side ack collection, like an honest broadcaster's.
    collecting: BTreeMap<Digest, (Envelope<TransferMsg>, BTreeMap<Pid, crate::broadcast::AuthTag>)>,
    certified: BTreeSet<Digest>,
}

impl ByzNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        me: Pid,
        strategy: ByzStrategy,
        n: u32,
        mode: BroadcastMode,
        auth: Authenticator,
        colluders: BTreeSet<Pid>,
        q0: LedgerState,
        mu: OwnershipMap,
    ) -> Self {
        Self {
            me,
            strategy,
            n,
            mode,
            auth,
            colluders,
            q0,
            mu,
            next_seq: 0,
            shared_seq: BTreeMap::new(),
            collecting: BTreeMap::new(),
            certified: BTreeSet::new(),
        }
    }

    fn everyone(&self) -> impl Iterator<Item = Pid> + '_ {
        (1..=self.n).map(Pid)
    }

    fn quorum(&self) -> usize {
        (2 * self.n as usize) / 3 + 1
    }

    /// My single-owner account, if any.
    fn own_account(&self) -> Option<AccountId> {
        self.q0
            .accounts()
            .find(|&a| self.mu.owners_of(a) == BTreeSet::from([self.me]))
    }

    /// Some account other than `avoid`, preferring ones I don't own.
    fn other_account(&self, avoid: &[AccountId]) -> AccountId {
        self.q0
            .accounts()
            .find(|a| !avoid.contains(a) && !self.mu.owns(self.me, *a))
            .or_else(|| self.q0.accounts().find(|a| !avoid.contains(a)))
            .unwrap_or(AccountId(1))
    }

    fn full_balance(&self, account: AccountId) -> Amount {
        self.q0.balance(account).unwrap_or(Amount(1))
    }

    fn envelope(
        &self,
        stream: StreamId,
        seq: u64,
        msg: TransferMsg,
        cert: Option<SeqCert>,
    ) -> Envelope<TransferMsg> {
        Envelope {
            origin: self.me,
            stream,
            seq,
            payload: msg,
            seq_cert: cert,
        }
    }

    fn msg(
        &self,
        source: AccountId,
        dest: AccountId,
        amount: Amount,
        seq: u64,
        deps: BTreeSet<TransferRecord>,
    ) -> TransferMsg {
        TransferMsg {
            record: TransferRecord::new(source, dest, amount, self.me, seq),
            deps,
        }
    }

    /// Disseminate an envelope: protocol-shaped in quorum mode, oracle
    /// submission in idealized mode, bare copies in raw mode. `targets`
    /// limits who gets the initial send (equivocation splits).
    fn disseminate(
        &mut self,
        env: Envelope<TransferMsg>,
        targets: Option<Vec<Pid>>,
        out: &mut ByzEmission,
    ) {
        match self.mode {
            BroadcastMode::Idealized => out.oracle.push(env),
            BroadcastMode::Quorum { .. } => {
                self.collecting
                    .entry(env.digest())
                    .or_insert_with(|| (env.clone(), BTreeMap::new()));
                let targets = targets.unwrap_or_else(|| self.everyone().collect());
                for p in targets {
                    out.wires.push((p, WireMsg::Send(env.clone())));
                }
            }
            BroadcastMode::Raw => {
                let targets = targets.unwrap_or_else(|| self.everyone().collect());
                for p in targets {
                    out.wires.push((p, WireMsg::Raw(env.clone())));
                }
            }
        }
    }

    /// Fire one attack volley. The scripted transfer supplies the source
    /// account, preferred destination, and amount where meaningful.
    pub fn fire(&mut self, volley: &Operation) -> ByzEmission {
        let mut out = ByzEmission::default();
        let (from, to, amount) = match *volley {
            Operation::Transfer { from, to, amount } => (Some(from), Some(to), Some(amount)),
            Operation::Read { .. } => (None, None, None),
        };
        // A volley on a shared account is the compromised-quorum attack:
        // the colluding owners hand out duplicate certified numbers.
        if let Some(account) = from {
            if self.mu.owners_of(account).len() > 1 && self.mu.owns(self.me, account) {
                self.shared_duplicate_seq(account, to, amount, &mut out);
                return out;
            }
        }
        let account = from
            .filter(|a| self.mu.owns(self.me, *a))
            .or_else(|| self.own_account());
        let Some(account) = account else {
            return out;
        };
        let dest = to.unwrap_or_else(|| self.other_account(&[account]));
        let amount = amount.unwrap_or_else(|| self.full_balance(account));
        match self.strategy {
            ByzStrategy::Silent => {}
            ByzStrategy::Equivocate => {
                // Same slot, two payloads: the honest peers are split into
                // disjoint halves, while every colluder (and the sender
                // itself) sees and acknowledges both sides.
                let seq = self.next_seq + 1;
                self.next_seq = seq;
                let alt = self.other_account(&[account, dest]);
                let env_a = self.envelope(
                    StreamId::Source(self.me),
                    seq,
                    self.msg(account, dest, amount, seq, BTreeSet::new()),
                    None,
                );
                let env_b = self.envelope(
                    StreamId::Source(self.me),
                    seq,
                    self.msg(account, alt, amount, seq, BTreeSet::new()),
                    None,
                );
                let (outsiders, insiders): (Vec<Pid>, Vec<Pid>) = self
                    .everyone()
                    .partition(|p| *p != self.me && !self.colluders.contains(p));
                let half = outsiders.len().div_ceil(2);
                let mut side_a = outsiders[..half].to_vec();
                let mut side_b = outsiders[half..].to_vec();
                side_a.extend(&insiders);
                side_b.extend(&insiders);
                self.disseminate(env_a, Some(side_a), &mut out);
                self.disseminate(env_b, Some(side_b), &mut out);
            }
            ByzStrategy::DoubleSpendRace => {
                // Race two spends of the same funds: first an overdraft,
                // then a full-balance transfer that sits on top of it. A
                // validator that skips the balance check applies the
                // overdraft; one that skips the sequence check applies the
                // second spend over a hole. Honest validators apply
                // neither.
                let alt = self.other_account(&[account, dest]);
                let full = self.full_balance(account);
                let spends = [
                    (1u64, dest, Amount(full.0.saturating_mul(2).max(1))),
                    (2u64, alt, full),
                ];
                for (record_seq, d, x) in spends {
                    let seq = self.next_seq + 1;
                    self.next_seq = seq;
                    let env = self.envelope(
                        StreamId::Source(self.me),
                        seq,
                        self.msg(account, d, x, record_seq, BTreeSet::new()),
                        None,
                    );
                    self.disseminate(env, None, &mut out);
                }
            }
            ByzStrategy::BadSeq => {
                let seq = self.next_seq + 3;
                let env = self.envelope(
                    StreamId::Source(self.me),
                    seq,
                    self.msg(account, dest, amount, seq, BTreeSet::new()),
                    None,
                );
                self.disseminate(env, None, &mut out);
            }
            ByzStrategy::ForgeOwner => {
                // Debit somebody else's account.
                let victim = self.other_account(&[]);
                let seq = self.next_seq + 1;
                self.next_seq = seq;
                let env = self.envelope(
                    StreamId::Source(self.me),
                    seq,
                    self.msg(victim, dest, self.full_balance(victim), 1, BTreeSet::new()),
                    None,
                );
                self.disseminate(env, None, &mut out);
            }
            ByzStrategy::StaleDeps => {
                let seq = self.next_seq + 1;
                self.next_seq = seq;
                let phantom = TransferRecord::new(
                    self.other_account(&[account]),
                    account,
                    Amount(999),
                    Pid(self.n + 7),
                    99,
                );
                let env = self.envelope(
                    StreamId::Source(self.me),
                    seq,
                    self.msg(account, dest, amount, seq, BTreeSet::from([phantom])),
                    None,
                );
                self.disseminate(env, None, &mut out);
            }
        }
        out
    }

    /// Compromised shared account: fabricate an owner-quorum certificate
    /// for a duplicate slot and broadcast a conflicting transfer. Works
    /// when the colluders hold more than two thirds of the owner set.
    fn shared_duplicate_seq(
        &mut self,
        account: AccountId,
        dest: Option<AccountId>,
        amount: Option<Amount>,
        out: &mut ByzEmission,
    ) {
        let seq = *self.shared_seq.entry(account).or_insert(1);
        self.shared_seq.insert(account, seq + 1);
        let dest = dest.unwrap_or_else(|| self.other_account(&[account]));
        let amount = amount.unwrap_or_else(|| self.full_balance(account));
        let owners = self.mu.owners_of(account);
        let signers: Vec<Pid> = owners
            .iter()
            .copied()
            .filter(|p| *p == self.me || self.colluders.contains(p))
            .collect();
        let cert = SeqCert::sign_all(
            account,
            seq,
            record_binding(account, dest, amount, self.me),
            signers.into_iter(),
            &self.auth,
        );
        let env = self.envelope(
            StreamId::Account(account),
            seq,
            self.msg(account, dest, amount, seq, BTreeSet::new()),
            Some(cert),
        );
        self.disseminate(env, None, out);
    }

    /// React to incoming wire traffic: collect acks for own envelopes,
    /// acknowledge colluders unconditionally, ignore the rest.
    pub fn on_wire(&mut self, from: Pid, msg: WireMsg<TransferMsg>) -> ByzEmission {
        let mut out = ByzEmission::default();
        match msg {
            WireMsg::Ack {
                digest,
                signer,
                tag,
                ..
            } => {
                if signer != from
                    || !self
                        .auth
                        .verify(signer, &format!("ack:{}", digest.0), tag)
                {
                    return out;
                }
                let quorum = self.quorum();
                let reached = match self.collecting.get_mut(&digest) {
                    Some((_, acks)) => {
                        acks.insert(signer, tag);
                        acks.len() >= quorum
                    }
                    None => false,
                };
                if reached && self.certified.insert(digest.clone()) {
                    let (env, acks) = self.collecting.get(&digest).expect("present");
                    let env = env.clone();
                    let acks: Vec<_> = acks.iter().map(|(&p, &t)| (p, t)).collect();
                    for p in self.everyone() {
                        out.wires.push((
                            p,
                            WireMsg::Cert {
                                env: env.clone(),
                                acks: acks.clone(),
                            },
                        ));
                    }
                }
            }
            WireMsg::Send(env) if self.colluders.contains(&from) || from == self.me => {
                let digest = env.digest();
                let tag = self.auth.sign(self.me, &format!("ack:{}", digest.0));
                out.wires.push((
                    env.origin,
                    WireMsg::Ack {
                        slot: env.slot(),
                        digest,
                        signer: self.me,
                        tag,
                    },
                ));
            }
            _ => {}
        }
        out
    }
}
