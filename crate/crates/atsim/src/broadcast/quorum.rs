//! Echo-quorum broadcast: send, ack-quorum certificate, double-echo ready
//! phase.
//!
//! Per broadcast, with all processes responsive: the sender transmits
//! `SEND` to all `n`, every process acknowledges to the sender (`n` acks),
//! the sender distributes the ack-quorum certificate (`n` certs), and every
//! process echoes `READY` to all (`n^2` readys). Delivery needs a >2n/3
//! ready quorum and happens in stream order.
//!
//! Safety rests on two rules at benign processes: acknowledge at most one
//! digest per (stream, seq) slot, and only when the slot is next in the
//! stream; send `READY` only for a certified digest, or after `f + 1`
//! readys vouch for it. Two conflicting envelopes for one slot can then
//! never both gather ack quorums (the quorums would intersect in a benign
//! process), and if any correct process delivers, the `f + 1`
//! amplification drags every other correct process to delivery.

use std::collections::{BTreeMap, BTreeSet};

use crate::ledger::Pid;
use crate::sim::trace::{DiagCode, StreamId};

use super::{AuthTag, Authenticator, Digest, Envelope, LayerStep, Payload, WireMsg};

type Slot = (StreamId, u64);

fn ack_statement(digest: &Digest) -> String {
    format!("ack:{}", digest.0)
}

/// Per-process state of the quorum protocol.
#[derive(Debug, Clone)]
pub struct QuorumLayer<P> {
    me: Pid,
    n: u32,
    f: u32,
    auth: Authenticator,
    /// Highest seq delivered per stream.
    delivered_seq: BTreeMap<StreamId, u64>,
    /// Content delivered per slot (for acking sends that arrive late).
    delivered_digest: BTreeMap<Slot, Digest>,
    /// The one digest this process acknowledged per slot.
    acked: BTreeMap<Slot, Digest>,
    /// Valid sends that are not yet acknowledgeable (stream gap).
    held_sends: BTreeMap<Slot, Vec<Envelope<P>>>,
    /// Sender side: acks collected for own broadcasts.
    collecting: BTreeMap<Digest, (Envelope<P>, BTreeMap<Pid, AuthTag>)>,
    certified: BTreeSet<Digest>,
    /// Ready senders per digest (identified by channel, not content).
    readys: BTreeMap<Digest, BTreeSet<Pid>>,
    ready_sent: BTreeSet<Digest>,
    /// Ready quorum reached, waiting for stream order.
    deliverable: BTreeMap<Slot, Envelope<P>>,
}

impl<P: Payload> QuorumLayer<P> {
    pub fn new(me: Pid, n: u32, f: u32, auth: Authenticator) -> Self {
        Self {
            me,
            n,
            f,
            auth,
            delivered_seq: BTreeMap::new(),
            delivered_digest: BTreeMap::new(),
            acked: BTreeMap::new(),
            held_sends: BTreeMap::new(),
            collecting: BTreeMap::new(),
            certified: BTreeSet::new(),
            readys: BTreeMap::new(),
            ready_sent: BTreeSet::new(),
            deliverable: BTreeMap::new(),
        }
    }

    /// Messages needed for a >2n/3 quorum.
    pub fn quorum(&self) -> usize {
        (2 * self.n as usize) / 3 + 1
    }

    fn everyone(&self) -> impl Iterator<Item = Pid> + '_ {
        (1..=self.n).map(Pid)
    }

    /// Begin broadcasting `env`: register it for ack collection and send
    /// it to every process.
    pub fn broadcast(&mut self, env: Envelope<P>) -> Vec<(Pid, WireMsg<P>)> {
        let digest = env.digest();
        self.collecting
            .entry(digest)
            .or_insert_with(|| (env.clone(), BTreeMap::new()));
        self.everyone()
            .map(|p| (p, WireMsg::Send(env.clone())))
            .collect()
    }

    /// Handle one incoming wire message.
    pub fn on_wire(
        &mut self,
        from: Pid,
        msg: WireMsg<P>,
        owners_of: &impl Fn(crate::ledger::AccountId) -> BTreeSet<Pid>,
    ) -> LayerStep<P> {
        let mut step = LayerStep::new();
        match msg {
            WireMsg::Send(env) => self.on_send(from, env, owners_of, &mut step),
            WireMsg::Ack {
                digest,
                signer,
                tag,
                ..
            } => self.on_ack(from, digest, signer, tag, &mut step),
            WireMsg::Cert { env, acks } => self.on_cert(env, acks, &mut step),
            WireMsg::Ready { env } => self.on_ready(from, env, &mut step),
            WireMsg::Oracle(_) | WireMsg::Raw(_) => {}
        }
        step
    }

    /// Envelope sanity independent of protocol state: channel-attested
    /// origin, stream/origin consistency, certificate when the stream is
    /// account-ordered.
    fn env_valid(
        &self,
        env: &Envelope<P>,
        claimed_from: Option<Pid>,
        owners_of: &impl Fn(crate::ledger::AccountId) -> BTreeSet<Pid>,
    ) -> bool {
        if let Some(from) = claimed_from {
            if env.origin != from {
                return false;
            }
        }
        match env.stream {
            StreamId::Source(p) => p == env.origin && env.seq >= 1,
            StreamId::Account(account) => {
                let owners = owners_of(account);
                let Some(cert) = &env.seq_cert else {
                    return false;
                };
                owners.contains(&env.origin)
                    && cert.account == account
                    && cert.seq == env.seq
                    && cert.binding == env.payload.binding()
                    && cert.verify(&owners, &self.auth)
            }
        }
    }

    fn next_seq(&self, stream: StreamId) -> u64 {
        self.delivered_seq.get(&stream).copied().unwrap_or(0) + 1
    }

    fn on_send(
        &mut self,
        from: Pid,
        env: Envelope<P>,
        owners_of: &impl Fn(crate::ledger::AccountId) -> BTreeSet<Pid>,
        step: &mut LayerStep<P>,
    ) {
        if !self.env_valid(&env, Some(from), owners_of) {
            step.diags.push((
                DiagCode::ForgedOwnerDiscarded,
                format!("send from {from} failed envelope validation"),
            ));
            return;
        }
        let slot = env.slot();
        if self.acked.contains_key(&slot) {
            // One ack per slot, ever; duplicates and conflicts are ignored.
            return;
        }
        if env.seq == self.next_seq(env.stream) {
            self.ack(env, step);
        } else if self.delivered_digest.get(&slot) == Some(&env.digest()) {
            // The slot was delivered before this copy of the send arrived;
            // acknowledging the delivered content keeps the one-digest-per-
            // slot rule intact.
            self.ack(env, step);
        } else if env.seq > self.next_seq(env.stream) {
            self.held_sends.entry(slot).or_default().push(env);
        }
    }

    fn ack(&mut self, env: Envelope<P>, step: &mut LayerStep<P>) {
        let digest = env.digest();
        let tag = self.auth.sign(self.me, &ack_statement(&digest));
        self.acked.insert(env.slot(), digest.clone());
        step.outgoing.push((
            env.origin,
            WireMsg::Ack {
                slot: env.slot(),
                digest,
                signer: self.me,
                tag,
            },
        ));
    }

    fn on_ack(
        &mut self,
        from: Pid,
        digest: Digest,
        signer: Pid,
        tag: AuthTag,
        step: &mut LayerStep<P>,
    ) {
        if signer != from || !self.auth.verify(signer, &ack_statement(&digest), tag) {
            return;
        }
        let quorum = self.quorum();
        let reached = {
            let Some((_, acks)) = self.collecting.get_mut(&digest) else {
                return;
            };
            acks.insert(signer, tag);
            acks.len() >= quorum
        };
        if reached && self.certified.insert(digest.clone()) {
            let (env, acks) = self.collecting.get(&digest).expect("registered above");
            let env = env.clone();
            let acks: Vec<(Pid, AuthTag)> = acks.iter().map(|(&p, &t)| (p, t)).collect();
            for p in self.everyone() {
                step.outgoing.push((
                    p,
                    WireMsg::Cert {
                        env: env.clone(),
                        acks: acks.clone(),
                    },
                ));
            }
        }
    }

    fn cert_valid(&self, digest: &Digest, acks: &[(Pid, AuthTag)]) -> bool {
        let statement = ack_statement(digest);
        let mut distinct = BTreeSet::new();
        for &(p, tag) in acks {
            if p.0 >= 1 && p.0 <= self.n && self.auth.verify(p, &statement, tag) {
                distinct.insert(p);
            }
        }
        distinct.len() >= self.quorum()
    }

    fn on_cert(&mut self, env: Envelope<P>, acks: Vec<(Pid, AuthTag)>, step: &mut LayerStep<P>) {
        let digest = env.digest();
        if !self.cert_valid(&digest, &acks) {
            return;
        }
        self.send_ready(env, step);
    }

    fn send_ready(&mut self, env: Envelope<P>, step: &mut LayerStep<P>) {
        if !self.ready_sent.insert(env.digest()) {
            return;
        }
        for p in self.everyone() {
            step.outgoing.push((p, WireMsg::Ready { env: env.clone() }));
        }
    }

    fn on_ready(&mut self, from: Pid, env: Envelope<P>, step: &mut LayerStep<P>) {
        let digest = env.digest();
        self.readys.entry(digest.clone()).or_default().insert(from);
        let count = self.readys[&digest].len();
        // f + 1 readys vouch that a correct process saw a certificate.
        if count >= self.f as usize + 1 {
            self.send_ready(env.clone(), step);
        }
        if count >= self.quorum() {
            let slot = env.slot();
            if self.next_seq(env.stream) > env.seq {
                return; // already delivered this slot
            }
            self.deliverable.entry(slot).or_insert(env);
            self.flush(step);
        }
    }

    fn flush(&mut self, step: &mut LayerStep<P>) {
        loop {
            let next = self
                .deliverable
                .keys()
                .find(|(stream, seq)| *seq == self.next_seq(*stream))
                .copied();
            let Some(slot) = next else { break };
            let env = self.deliverable.remove(&slot).expect("key just found");
            self.delivered_seq.insert(slot.0, slot.1);
            self.delivered_digest.insert(slot, env.digest());
            step.delivered.push(env);
            // Delivering a slot may make the next held send ackable.
            if let Some(mut held) = self.held_sends.remove(&(slot.0, slot.1 + 1)) {
                if !self.acked.contains_key(&(slot.0, slot.1 + 1)) && !held.is_empty() {
                    let env = held.remove(0);
                    self.ack(env, step);
                }
            }
        }
    }
}
