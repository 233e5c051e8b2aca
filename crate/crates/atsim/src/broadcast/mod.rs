//! Secure broadcast over the simulated network.
//!
//! The guarantees, for benign receivers and up to `f` Byzantine processes
//! out of `n > 3f`:
//!
//! - **Integrity**: a message from a stream's slot is delivered at most
//!   once, and (for benign senders) only if it was broadcast.
//! - **Agreement**: if one correct process delivers, every correct
//!   process delivers.
//! - **Validity**: a correct broadcaster delivers its own message.
//! - **Source order**: benign receivers deliver any two messages of the
//!   same stream in the same order; streams are per-sender, or per-account
//!   when an account's owners share it.
//!
//! Two interchangeable implementations: an idealized oracle in which the
//! properties hold by construction, and the echo-quorum protocol in
//! [`quorum`] (send, collect a >2n/3 ack quorum, rebroadcast the
//! certificate, double-echo ready phase). A third, deliberately unprotected
//! [`RawLayer`] exists as a negative control: it lets adversaries violate
//! the properties so the monitors can be shown to catch them.

pub mod quorum;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ledger::{AccountId, Pid};
use crate::sim::trace::StreamId;

pub use quorum::QuorumLayer;

/// What the envelope carries. The binding string is what sequence-number
/// certificates sign (everything identity-relevant except the dependency
/// set, which the issuer picks after the number is assigned).
pub trait Payload: Clone + Eq + Ord + Serialize {
    fn binding(&self) -> String;
}

impl Payload for u32 {
    fn binding(&self) -> String {
        self.to_string()
    }
}

impl Payload for String {
    fn binding(&self) -> String {
        self.clone()
    }
}

/// Content identity of an envelope: the canonical serialization of
/// everything that matters. Exact, not a hash, so equality is collision
/// free.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Digest(pub String);

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Compact fingerprint for logs; the full string is the identity.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.0.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        write!(f, "{h:016x}")
    }
}

/// A tag a process attaches to a statement. Stands in for a signature:
/// holders of a process's signer can produce tags that verify for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct AuthTag(pub u64);

/// Pluggable authentication scheme. The default stub leans on the
/// simulator's authenticated channels; the keyed variant derives per-process
/// tags from per-process keys so aggregated statements (ack quorums,
/// sequence certificates) verify structurally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Authenticator {
    Stub,
    KeyedTag { keys: BTreeMap<Pid, u64> },
}

fn fnv(parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

fn str_fold(s: &str) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl Authenticator {
    pub fn keyed(pids: impl Iterator<Item = Pid>) -> Self {
        Self::KeyedTag {
            keys: pids.map(|p| (p, fnv(&[0xfeed, u64::from(p.0)]))).collect(),
        }
    }

    pub fn sign(&self, signer: Pid, message: &str) -> AuthTag {
        match self {
            Self::Stub => AuthTag(fnv(&[u64::from(signer.0), str_fold(message)])),
            Self::KeyedTag { keys } => {
                let key = keys.get(&signer).copied().unwrap_or(0);
                AuthTag(fnv(&[key, str_fold(message)]))
            }
        }
    }

    pub fn verify(&self, signer: Pid, message: &str, tag: AuthTag) -> bool {
        self.sign(signer, message) == tag
    }
}

/// Certificate that an account's ordering service assigned `seq` to the
/// transfer identified by `binding`: tags from more than two thirds of the
/// account's owners.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SeqCert {
    pub account: AccountId,
    pub seq: u64,
    pub binding: String,
    pub signers: Vec<(Pid, AuthTag)>,
}

impl SeqCert {
    pub fn statement(account: AccountId, seq: u64, binding: &str) -> String {
        format!("seqcert:{account}:{seq}:{binding}")
    }

    pub fn sign_all(
        account: AccountId,
        seq: u64,
        binding: String,
        signers: impl Iterator<Item = Pid>,
        auth: &Authenticator,
    ) -> Self {
        let statement = Self::statement(account, seq, &binding);
        Self {
            account,
            seq,
            binding,
            signers: signers.map(|p| (p, auth.sign(p, &statement))).collect(),
        }
    }

    /// Checks the owner quorum: distinct owners holding more than 2/3 of
    /// the ownership set, each with a verifying tag.
    pub fn verify(&self, owners: &std::collections::BTreeSet<Pid>, auth: &Authenticator) -> bool {
        let statement = Self::statement(self.account, self.seq, &self.binding);
        let mut seen = std::collections::BTreeSet::new();
        for &(p, tag) in &self.signers {
            if owners.contains(&p) && auth.verify(p, &statement, tag) {
                seen.insert(p);
            }
        }
        3 * seen.len() > 2 * owners.len()
    }
}

/// A broadcast message as carried on the wire: the content plus its stream
/// position and, in account-order mode, the sequence certificate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Envelope<P> {
    pub origin: Pid,
    pub stream: StreamId,
    pub seq: u64,
    pub payload: P,
    pub seq_cert: Option<SeqCert>,
}

impl<P: Payload> Envelope<P> {
    pub fn digest(&self) -> Digest {
        Digest(
            serde_json::to_string(&(
                self.origin,
                self.stream,
                self.seq,
                &self.payload,
            ))
            .expect("payloads serialize"),
        )
    }

    pub fn slot(&self) -> (StreamId, u64) {
        (self.stream, self.seq)
    }
}

/// Wire messages exchanged by the broadcast implementations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WireMsg<P> {
    /// Quorum protocol: initial transmission from the broadcaster.
    Send(Envelope<P>),
    /// Quorum protocol: a receiver's acknowledgment of a send, back to the
    /// broadcaster. Tagged so the broadcaster can aggregate a certificate.
    Ack {
        slot: (StreamId, u64),
        digest: Digest,
        signer: Pid,
        tag: AuthTag,
    },
    /// Quorum protocol: the broadcaster's proof of a >2n/3 ack quorum.
    Cert {
        env: Envelope<P>,
        acks: Vec<(Pid, AuthTag)>,
    },
    /// Quorum protocol: second echo. Carries the envelope so a process
    /// that missed the send can still deliver.
    Ready { env: Envelope<P> },
    /// Idealized mode: delivery item from the trusted oracle.
    Oracle(Envelope<P>),
    /// Raw mode: unprotected point-to-point copy.
    Raw(Envelope<P>),
}

impl<P> WireMsg<P> {
    pub fn label(&self) -> &'static str {
        match self {
            WireMsg::Send(_) => "send",
            WireMsg::Ack { .. } => "ack",
            WireMsg::Cert { .. } => "cert",
            WireMsg::Ready { .. } => "ready",
            WireMsg::Oracle(_) => "oracle",
            WireMsg::Raw(_) => "raw",
        }
    }
}

impl<P: Payload> WireMsg<P> {
    /// (stream, seq, digest) the message is about, for trace accounting.
    pub fn slot_info(&self) -> (StreamId, u64, Digest) {
        match self {
            WireMsg::Send(env)
            | WireMsg::Cert { env, .. }
            | WireMsg::Ready { env }
            | WireMsg::Oracle(env)
            | WireMsg::Raw(env) => (env.stream, env.seq, env.digest()),
            WireMsg::Ack { slot, digest, .. } => (slot.0, slot.1, digest.clone()),
        }
    }
}

/// What one wire event produced at a receiving layer.
#[derive(Debug, Clone, Default)]
pub struct LayerStep<P> {
    pub outgoing: Vec<(Pid, WireMsg<P>)>,
    pub delivered: Vec<Envelope<P>>,
    pub diags: Vec<(crate::sim::trace::DiagCode, String)>,
}

impl<P> LayerStep<P> {
    pub fn new() -> Self {
        Self {
            outgoing: Vec::new(),
            delivered: Vec::new(),
            diags: Vec::new(),
        }
    }
}

/// Receiver side of the idealized oracle: releases oracle items in stream
/// order. The oracle itself (slot registry, fan-out) lives with the
/// network, see [`OracleState`].
#[derive(Debug, Clone, Default)]
pub struct IdealLayer<P> {
    delivered_seq: BTreeMap<StreamId, u64>,
    held: BTreeMap<(StreamId, u64), Envelope<P>>,
}

impl<P: Payload> IdealLayer<P> {
    pub fn new() -> Self {
        Self {
            delivered_seq: BTreeMap::new(),
            held: BTreeMap::new(),
        }
    }

    pub fn on_wire(&mut self, msg: WireMsg<P>) -> LayerStep<P> {
        let mut step = LayerStep::new();
        let WireMsg::Oracle(env) = msg else {
            return step;
        };
        self.held.insert(env.slot(), env);
        self.flush(&mut step);
        step
    }

    fn flush(&mut self, step: &mut LayerStep<P>) {
        loop {
            let next = self.held.keys().find(|(stream, seq)| {
                *seq == self.delivered_seq.get(stream).copied().unwrap_or(0) + 1
            });
            let Some(&slot) = next else { break };
            let env = self.held.remove(&slot).expect("key just found");
            self.delivered_seq.insert(slot.0, slot.1);
            step.delivered.push(env);
        }
    }
}

/// Oracle bookkeeping for idealized mode: one broadcast per slot, fan-out
/// to every process. Shared by the whole simulated system, which is what
/// makes it "trusted".
#[derive(Debug, Clone, Default)]
pub struct OracleState {
    slots: BTreeMap<(StreamId, u64), Digest>,
}

impl OracleState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the broadcast; returns oracle items for every process, or
    /// `None` if the slot was already taken by different content (the
    /// attempted equivocation is suppressed).
    pub fn submit<P: Payload>(
        &mut self,
        env: Envelope<P>,
        n: u32,
    ) -> Option<Vec<(Pid, WireMsg<P>)>> {
        let digest = env.digest();
        match self.slots.get(&env.slot()) {
            Some(existing) if *existing != digest => return None,
            Some(_) => return Some(Vec::new()),
            None => {
                self.slots.insert(env.slot(), digest);
            }
        }
        Some(
            (1..=n)
                .map(|i| (Pid(i), WireMsg::Oracle(env.clone())))
                .collect(),
        )
    }
}

/// Unprotected channels: every copy is delivered as it arrives, nothing is
/// checked. Negative-control mode.
#[derive(Debug, Clone, Default)]
pub struct RawLayer;

impl RawLayer {
    pub fn on_wire<P: Payload>(&mut self, msg: WireMsg<P>) -> LayerStep<P> {
        let mut step = LayerStep::new();
        if let WireMsg::Raw(env) = msg {
            step.delivered.push(env);
        }
        step
    }
}
