//! The simulated message-passing system: nodes, network, broadcast
//! layers, ordering services.

use std::collections::{BTreeMap, BTreeSet};

use crate::broadcast::{
    Authenticator, Envelope, IdealLayer, OracleState, QuorumLayer, RawLayer, SeqCert,
    WireMsg,
};
use crate::ledger::{AccountId, Amount, Operation, OwnershipMap, Pid};
use crate::mp::baseline::BaselineNode;
use crate::mp::byzantine::{ByzEmission, ByzNode};
use crate::mp::node::{TransferNode, ValidationOpts};
use crate::mp::service::{QueuedRequest, ServiceState};
use crate::mp::{BroadcastReq, NodeOut, TransferMsg};
use crate::sim::engine::{EventKey, System};
use crate::sim::trace::{DiagCode, EventKind, OpId, TraceSink};
use crate::sim::{Algorithm, BroadcastMode, Scenario};

#[derive(Debug, Clone)]
enum Layer {
    Ideal(IdealLayer<TransferMsg>),
    Quorum(Box<QuorumLayer<TransferMsg>>),
    Raw(RawLayer),
}

#[derive(Debug, Clone)]
enum NodeKind {
    Benign(Box<TransferNode>),
    Byz(Box<ByzNode>),
    Baseline(Box<BaselineNode>),
}

#[derive(Debug, Clone)]
struct NodeSlot {
    layer: Layer,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum InFlight {
    Bcast {
        from: Pid,
        to: Pid,
        msg: WireMsg<TransferMsg>,
    },
    SeqRequest {
        from: Pid,
        account: AccountId,
        dest: AccountId,
        amount: Amount,
    },
    SeqAssign {
        to: Pid,
        account: AccountId,
        seq: u64,
        cert: SeqCert,
    },
    Submit {
        from: Pid,
        to: Pid,
        op: Operation,
    },
}

/// Whole-system state for message-passing scenarios; one scheduler step is
/// one operation invocation, one message receipt, or one service action.
#[derive(Debug, Clone)]
pub struct MpSystem {
    n: u32,
    mode: BroadcastMode,
    mu: OwnershipMap,
    auth: Authenticator,
    slots: Vec<NodeSlot>,
    scripts: Vec<Vec<Operation>>,
    cursors: Vec<usize>,
    network: BTreeMap<u64, InFlight>,
    next_msg: u64,
    oracle: OracleState,
    services: BTreeMap<AccountId, ServiceState>,
    crashed: BTreeSet<Pid>,
    /// Issuing operation per record uid, for effect-visibility events.
    record_ops: BTreeMap<(Pid, u64), OpId>,
    visible_done: BTreeSet<(Pid, u64)>,
    /// Processes that stay correct for the whole run (visibility is only
    /// attested at them).
    correct: BTreeSet<Pid>,
}

impl MpSystem {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let n = scenario.n;
        let q0 = scenario.q0();
        let mu = scenario.ownership();
        let auth = Authenticator::keyed(scenario.pids());
        let opts = ValidationOpts {
            balance_includes_deps: scenario.options.validation_balance_includes_deps,
            bug: scenario.options.injected_bug,
        };
        let colluders: BTreeSet<Pid> = scenario.faults.byzantine.keys().copied().collect();
        let f = match scenario.broadcast {
            BroadcastMode::Quorum { f } => f,
            _ => 0,
        };
        let slots = scenario
            .pids()
            .map(|p| {
                let layer = match scenario.broadcast {
                    BroadcastMode::Idealized => Layer::Ideal(IdealLayer::new()),
                    BroadcastMode::Quorum { .. } => {
                        Layer::Quorum(Box::new(QuorumLayer::new(p, n, f, auth.clone())))
                    }
                    BroadcastMode::Raw => Layer::Raw(RawLayer),
                };
                let kind = if let Some(&strategy) = scenario.faults.byzantine.get(&p) {
                    NodeKind::Byz(Box::new(ByzNode::new(
                        p,
                        strategy,
                        n,
                        scenario.broadcast,
                        auth.clone(),
                        colluders.iter().copied().filter(|&c| c != p).collect(),
                        q0.clone(),
                        mu.clone(),
                    )))
                } else if scenario.algorithm == Algorithm::SequencerBaseline {
                    let sequencer = scenario.sequencer.expect("validated");
                    NodeKind::Baseline(Box::new(BaselineNode::new(
                        p,
                        sequencer,
                        q0.clone(),
                        mu.clone(),
                    )))
                } else {
                    NodeKind::Benign(Box::new(TransferNode::new(
                        p,
                        q0.clone(),
                        mu.clone(),
                        opts,
                    )))
                };
                NodeSlot { layer, kind }
            })
            .collect();
        let services = scenario
            .accounts
            .iter()
            .filter(|a| a.owners.len() > 1)
            .map(|a| {
                (
                    a.id,
                    ServiceState::new(
                        a.id,
                        a.owners.iter().copied().collect(),
                        scenario.service_mode(a.id),
                    ),
                )
            })
            .collect();
        let scripts = scenario
            .pids()
            .map(|p| scenario.scripts.get(&p).cloned().unwrap_or_default())
            .collect();
        Self {
            n,
            mode: scenario.broadcast,
            mu,
            auth,
            slots,
            scripts,
            cursors: vec![0; n as usize],
            network: BTreeMap::new(),
            next_msg: 0,
            oracle: OracleState::new(),
            services,
            crashed: BTreeSet::new(),
            record_ops: BTreeMap::new(),
            visible_done: BTreeSet::new(),
            correct: scenario.correct().into_iter().collect(),
        }
    }

    fn idx(p: Pid) -> usize {
        (p.0 - 1) as usize
    }

    fn enqueue(&mut self, from: Pid, wire: InFlight, sink: &mut TraceSink) {
        let (to, kind, slot) = match &wire {
            InFlight::Bcast { to, msg, .. } => {
                let (stream, seq, digest) = msg.slot_info();
                (*to, msg.label(), Some((stream, seq, digest)))
            }
            InFlight::SeqRequest { .. } => (Pid(0), "seq_request", None),
            InFlight::SeqAssign { to, .. } => (*to, "seq_assign", None),
            InFlight::Submit { to, .. } => (*to, "submit", None),
        };
        sink.emit(
            from,
            EventKind::NetSend {
                to,
                kind: kind.to_string(),
                stream: slot.as_ref().map(|s| s.0),
                seq: slot.as_ref().map(|s| s.1),
                digest: slot.as_ref().map(|s| s.2.to_string()),
            },
        );
        self.network.insert(self.next_msg, wire);
        self.next_msg += 1;
    }

    fn do_broadcast(&mut self, p: Pid, req: BroadcastReq, sink: &mut TraceSink) {
        let env = Envelope {
            origin: p,
            stream: req.stream,
            seq: req.seq,
            payload: req.msg,
            seq_cert: req.cert,
        };
        sink.emit(
            p,
            EventKind::Broadcast {
                stream: req.stream,
                seq: req.seq,
                digest: env.digest().to_string(),
            },
        );
        if let Some(op) = req.op {
            self.record_ops
                .insert(env.payload.record.uid, op);
        }
        self.submit_envelope(p, env, sink);
    }

    fn submit_envelope(
        &mut self,
        p: Pid,
        env: Envelope<TransferMsg>,
        sink: &mut TraceSink,
    ) {
        match self.mode {
            BroadcastMode::Idealized => match self.oracle.submit(env, self.n) {
                Some(wires) => {
                    for (to, msg) in wires {
                        self.enqueue(p, InFlight::Bcast { from: p, to, msg }, sink);
                    }
                }
                None => sink.emit(
                    p,
                    EventKind::Diag {
                        code: DiagCode::EquivocationSuppressed,
                        detail: "oracle refused duplicate slot".into(),
                    },
                ),
            },
            BroadcastMode::Quorum { .. } => {
                let Layer::Quorum(layer) = &mut self.slots[Self::idx(p)].layer else {
                    unreachable!("mode and layer agree");
                };
                for (to, msg) in layer.broadcast(env) {
                    self.enqueue(p, InFlight::Bcast { from: p, to, msg }, sink);
                }
            }
            BroadcastMode::Raw => {
                for to in (1..=self.n).map(Pid) {
                    self.enqueue(
                        p,
                        InFlight::Bcast {
                            from: p,
                            to,
                            msg: WireMsg::Raw(env.clone()),
                        },
                        sink,
                    );
                }
            }
        }
    }

    fn process_out(&mut self, p: Pid, out: NodeOut, sink: &mut TraceSink) {
        for event in out.events {
            if let EventKind::Apply { record, .. } = &event {
                if self.correct.contains(&p) && self.visible_done.insert(record.uid) {
                    if let Some(&op) = self.record_ops.get(&record.uid) {
                        sink.emit(
                            p,
                            EventKind::Visible {
                                op,
                                record: *record,
                            },
                        );
                    }
                }
            }
            sink.emit(p, event);
        }
        for req in out.broadcasts {
            self.do_broadcast(p, req, sink);
        }
        for req in out.seq_requests {
            self.enqueue(
                p,
                InFlight::SeqRequest {
                    from: p,
                    account: req.account,
                    dest: req.dest,
                    amount: req.amount,
                },
                sink,
            );
        }
        for sub in out.submits {
            self.enqueue(
                p,
                InFlight::Submit {
                    from: p,
                    to: sub.sequencer,
                    op: sub.op,
                },
                sink,
            );
        }
    }

    fn emission(&mut self, p: Pid, emission: ByzEmission, sink: &mut TraceSink) {
        for (to, msg) in emission.wires {
            self.enqueue(p, InFlight::Bcast { from: p, to, msg }, sink);
        }
        for env in emission.oracle {
            self.submit_envelope(p, env, sink);
        }
    }

    fn invoke_next(&mut self, p: Pid, sink: &mut TraceSink) {
        let index = self.cursors[Self::idx(p)];
        self.cursors[Self::idx(p)] += 1;
        let op = self.scripts[Self::idx(p)][index];
        let op_id = OpId { pid: p, index };
        match &mut self.slots[Self::idx(p)].kind {
            NodeKind::Benign(node) => {
                sink.emit(
                    p,
                    EventKind::Invoke {
                        op: op_id,
                        operation: op,
                    },
                );
                let out = node.invoke(op_id, op);
                self.process_out(p, out, sink);
            }
            NodeKind::Baseline(node) => {
                sink.emit(
                    p,
                    EventKind::Invoke {
                        op: op_id,
                        operation: op,
                    },
                );
                let out = node.invoke(op_id, op);
                self.process_out(p, out, sink);
            }
            NodeKind::Byz(node) => {
                let emission = node.fire(&op);
                self.emission(p, emission, sink);
            }
        }
    }

    fn deliver(&mut self, id: u64, sink: &mut TraceSink) {
        let Some(wire) = self.network.remove(&id) else {
            return;
        };
        match wire {
            InFlight::Bcast { from, to, msg } => self.deliver_bcast(from, to, msg, sink),
            InFlight::SeqRequest {
                from,
                account,
                dest,
                amount,
            } => {
                sink.emit(from, EventKind::SeqRequest { account });
                if let Some(service) = self.services.get_mut(&account) {
                    service.enqueue(QueuedRequest {
                        requester: from,
                        dest,
                        amount,
                    });
                }
            }
            InFlight::SeqAssign {
                to,
                account,
                seq,
                cert,
            } => {
                if let NodeKind::Benign(node) = &mut self.slots[Self::idx(to)].kind {
                    let out = node.on_seq_assign(account, seq, cert);
                    self.process_out(to, out, sink);
                }
            }
            InFlight::Submit { from, to, op } => {
                if let NodeKind::Baseline(node) = &mut self.slots[Self::idx(to)].kind {
                    let out = node.on_submit(from, op);
                    self.process_out(to, out, sink);
                }
            }
        }
    }

    fn deliver_bcast(
        &mut self,
        from: Pid,
        to: Pid,
        msg: WireMsg<TransferMsg>,
        sink: &mut TraceSink,
    ) {
        let slot = &mut self.slots[Self::idx(to)];
        if let NodeKind::Byz(node) = &mut slot.kind {
            let emission = node.on_wire(from, msg);
            self.emission(to, emission, sink);
            return;
        }
        let mu = self.mu.clone();
        let owners_of = |account: AccountId| mu.owners_of(account);
        let step = match &mut slot.layer {
            Layer::Ideal(layer) => layer.on_wire(msg),
            Layer::Quorum(layer) => layer.on_wire(from, msg, &owners_of),
            Layer::Raw(layer) => layer.on_wire(msg),
        };
        for (code, detail) in step.diags {
            sink.emit(to, EventKind::Diag { code, detail });
        }
        let mut followups = Vec::new();
        for (next_to, next_msg) in step.outgoing {
            followups.push(InFlight::Bcast {
                from: to,
                to: next_to,
                msg: next_msg,
            });
        }
        for wire in followups {
            self.enqueue(to, wire, sink);
        }
        for env in step.delivered {
            sink.emit(
                to,
                EventKind::Deliver {
                    origin: env.origin,
                    stream: env.stream,
                    seq: env.seq,
                    digest: env.digest().to_string(),
                },
            );
            let out = match &mut self.slots[Self::idx(to)].kind {
                NodeKind::Benign(node) => node.on_deliver(env.origin, env.stream, env.payload),
                NodeKind::Baseline(node) => node.on_deliver(env.origin, env.payload),
                NodeKind::Byz(_) => NodeOut::new(),
            };
            self.process_out(to, out, sink);
        }
    }

    fn has_script_work(&self, p: Pid) -> bool {
        let i = Self::idx(p);
        if self.cursors[i] >= self.scripts[i].len() {
            return false;
        }
        match &self.slots[i].kind {
            NodeKind::Benign(node) => node.is_idle(),
            NodeKind::Baseline(node) => node.is_idle(),
            NodeKind::Byz(_) => true,
        }
    }
}

impl System for MpSystem {
    fn enabled(&self) -> Vec<EventKey> {
        let mut keys = Vec::new();
        for p in (1..=self.n).map(Pid) {
            if !self.crashed.contains(&p) && self.has_script_work(p) {
                keys.push(EventKey::Proc(p));
            }
        }
        for (&id, wire) in &self.network {
            let to = match wire {
                InFlight::Bcast { to, .. }
                | InFlight::SeqAssign { to, .. }
                | InFlight::Submit { to, .. } => Some(*to),
                InFlight::SeqRequest { .. } => None,
            };
            if to.is_none_or(|p| !self.crashed.contains(&p)) {
                keys.push(EventKey::Deliver(id));
            }
        }
        for (&account, service) in &self.services {
            if service.has_work() {
                keys.push(EventKey::Service(account));
            }
        }
        keys
    }

    fn step(&mut self, key: EventKey, sink: &mut TraceSink) {
        match key {
            EventKey::Proc(p) => self.invoke_next(p, sink),
            EventKey::Deliver(id) => self.deliver(id, sink),
            EventKey::Service(account) => {
                let Some(service) = self.services.get_mut(&account) else {
                    return;
                };
                let Some((assignment, cert)) = service.step(&self.auth) else {
                    return;
                };
                sink.emit(
                    Pid(0),
                    EventKind::SeqAssign {
                        account,
                        seq: assignment.seq,
                        requester: assignment.requester,
                    },
                );
                self.enqueue(
                    Pid(0),
                    InFlight::SeqAssign {
                        to: assignment.requester,
                        account,
                        seq: assignment.seq,
                        cert,
                    },
                    sink,
                );
            }
        }
    }

    fn crash(&mut self, p: Pid, _sink: &mut TraceSink) {
        self.crashed.insert(p);
    }
}
