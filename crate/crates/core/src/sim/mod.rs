//! Deterministic discrete-event engine.
//!
//! Every node owns a FIFO CPU queue (proposal creation and proposal
//! validation), a log view, and its own epoch table. Slots are arbitrated
//! by a global [`SlotArbiter`](crate::consensus::SlotArbiter) per slot.
//! Events are processed in `(time, sequence)` order and all randomness
//! comes from one seeded generator, so a run is a pure function of its
//! configuration.

mod faults;
mod net;
mod node;

pub use faults::FaultPlan;
pub use net::{sample_delay, NetModel, PreGstMode};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, ScenarioConfig};
use crate::consensus::{fast_path_times, AcceptOutcome, Pacemaker, SlotArbiter, Via};
use crate::harness::{PayloadSupply, WindowPolicy};
use crate::log::{Block, SlotValue};
use crate::ticketing::{
    mtr_request_gate, verify_ticket, EpochParams, EpochTable, GrantBatch, RegimeSpec, TicketProof, TicketRegime,
    Verdict,
};
use crate::trace::{EventKind, Trace};
use crate::types::{epoch_of, epoch_slots, EpochNumber, Micros, NodeId, SlotNumber};

use node::{NodeState, OutstandingRequest, TimerRec, Work};

/// Extra virtual time allowed after `duration` for in-flight slots to drain.
const DRAIN_LIMIT: Micros = 60_000_000;

#[derive(Clone, Debug)]
enum Ev {
    Deliver {
        to: NodeId,
        block: Arc<Block>,
    },
    CpuDone {
        node: NodeId,
        work: Work,
    },
    RequestArrive {
        server: NodeId,
        from: NodeId,
        epoch: EpochNumber,
        id: u64,
    },
    GrantArrive {
        to: NodeId,
        batch: GrantBatch,
        id: u64,
        epoch: EpochNumber,
    },
    RequestTimeout {
        node: NodeId,
        id: u64,
    },
    TimerFire {
        node: NodeId,
        slot: SlotNumber,
    },
    FastCommit {
        slot: SlotNumber,
    },
    FallbackDecide {
        slot: SlotNumber,
    },
    FinalizeAt {
        node: NodeId,
        slot: SlotNumber,
    },
    Crash {
        node: NodeId,
    },
    Phase {
        index: usize,
    },
    Wake {
        node: NodeId,
    },
    End,
}

struct Scheduled {
    at: Micros,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Default)]
struct SlotRecord {
    arb: SlotArbiter,
    fast_times: BTreeMap<NodeId, Micros>,
}

struct Costs {
    create: Micros,
    process: Micros,
    vote: Micros,
    grant: Micros,
    serialization: Micros,
    catchup: Micros,
}

/// Runs a scenario to quiescence and returns its trace.
pub fn run(cfg: &ScenarioConfig) -> Result<Trace, ConfigError> {
    cfg.validate()?;
    Ok(Simulation::new(cfg)?.run())
}

pub struct Simulation {
    n: usize,
    quorum: usize,
    epoch_len: u64,
    batch: u64,
    regime: RegimeSpec,
    policy: WindowPolicy,
    net: NetModel,
    faults: FaultPlan,
    pacemaker: Pacemaker,
    fallback: Micros,
    timeout: Micros,
    costs: Costs,
    duration: Micros,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    now: Micros,
    ended: bool,
    nodes: Vec<NodeState>,
    slots: BTreeMap<SlotNumber, SlotRecord>,
    next_request: u64,
    trace: Trace,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        let invalid = |field: &str, message: String| {
            ConfigError::Invalid(vec![crate::config::FieldError {
                field: field.to_string(),
                message,
            }])
        };
        let f = cfg.faults_threshold();
        let params = EpochParams {
            n: cfg.n,
            f,
            epoch_len: cfg.epoch_len,
            concurrency: cfg.concurrency,
            seed: cfg.election_seed_bytes(),
        };
        let pacemaker =
            Pacemaker::new(cfg.timeout_ms.us(), cfg.delta_ms.us()).map_err(|e| invalid("timeout_ms", e.to_string()))?;
        let mut nodes = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n {
            let id = NodeId(i as u32);
            let epochs = EpochTable::new(params.clone(), &cfg.regime).map_err(|e| invalid("regime", e.to_string()))?;
            let workload = cfg
                .node_profile(id)
                .and_then(|p| p.workload.clone())
                .unwrap_or_else(|| cfg.workload.clone());
            nodes.push(NodeState::new(id, epochs, PayloadSupply::new(workload)));
        }
        let c = &cfg.costs;
        Ok(Self {
            n: cfg.n,
            quorum: cfg.quorum(),
            epoch_len: cfg.epoch_len,
            batch: cfg.regime.batch().unwrap_or(1),
            regime: cfg.regime.clone(),
            policy: WindowPolicy::from_config(cfg),
            net: NetModel::from_config(cfg),
            faults: FaultPlan::new(cfg),
            pacemaker,
            fallback: cfg.fallback_latency().us(),
            timeout: cfg.timeout_ms.us(),
            costs: Costs {
                create: c.create_ms.us(),
                process: c.process_ms.us(),
                vote: c.vote_ms.us(),
                grant: c.grant_ms.us(),
                serialization: c.serialization_ms.us(),
                catchup: c.catchup_ms.us(),
            },
            duration: cfg.duration_ms.us(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            ended: false,
            nodes,
            slots: BTreeMap::new(),
            next_request: 0,
            trace: {
                let mut t = Trace::default();
                t.push(
                    0,
                    None,
                    None,
                    EventKind::Init {
                        n: cfg.n,
                        f,
                        epoch_len: cfg.epoch_len,
                        concurrency: cfg.concurrency,
                        seed: cfg.seed,
                    },
                );
                t
            },
        })
        .map(|mut sim| {
            sim.bootstrap(cfg);
            sim
        })
    }

    fn bootstrap(&mut self, cfg: &ScenarioConfig) {
        if let Some(phase) = cfg.phase_ms.map(|p| p.us()).filter(|p| *p > 0) {
            let count = self.duration.div_ceil(phase).max(1) as usize;
            for index in 0..count {
                self.schedule(index as Micros * phase, Ev::Phase { index });
            }
        }
        for i in 0..self.n {
            let id = NodeId(i as u32);
            if let Some(at) = self.faults.crash_time(id) {
                self.schedule(at, Ev::Crash { node: id });
            }
            if self.nodes[i].epochs.is_hybrid() {
                for e in 1..=cfg.concurrency {
                    let view = self.nodes[i]
                        .epochs
                        .lookup(EpochNumber(e))
                        .expect("initial epochs")
                        .to_state();
                    self.trace.push(
                        0,
                        Some(id),
                        None,
                        EventKind::EpochDecided {
                            epoch: view.epoch,
                            regime: view.regime,
                            candidates: view.candidates,
                        },
                    );
                }
            }
        }
        self.schedule(self.duration, Ev::End);
        if self.duration == 0 {
            self.ended = true;
            return;
        }
        for i in 0..self.n {
            let id = NodeId(i as u32);
            self.arm(id);
            self.act(id);
        }
    }

    pub fn run(mut self) -> Trace {
        while let Some(s) = self.queue.pop() {
            if s.at > self.duration.saturating_add(DRAIN_LIMIT) {
                break;
            }
            self.now = s.at;
            self.handle(s.ev);
        }
        self.trace
    }

    fn schedule(&mut self, at: Micros, ev: Ev) {
        self.seq += 1;
        self.queue.push(Scheduled { at, seq: self.seq, ev });
    }

    fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.index()]
    }

    fn emit(&mut self, node: Option<NodeId>, slot: Option<SlotNumber>, kind: EventKind) {
        self.trace.push(self.now, node, slot, kind);
    }

    fn delay(&mut self, from: NodeId, to: NodeId) -> Option<Micros> {
        if from == to {
            return Some(0);
        }
        sample_delay(&self.net, self.now, from, to, &mut self.rng)
    }

    fn scaled(base: Micros, mult: f64) -> Micros {
        (base as f64 * mult).round() as Micros
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Deliver { to, block } => self.on_deliver(to, block),
            Ev::CpuDone { node, work } => self.on_cpu_done(node, work),
            Ev::RequestArrive {
                server,
                from,
                epoch,
                id,
            } => self.on_request(server, from, epoch, id),
            Ev::GrantArrive { to, batch, id, epoch } => self.on_grant(to, batch, id, epoch),
            Ev::RequestTimeout { node, id } => {
                if self.node(node).request.as_ref().is_some_and(|r| r.id == id) {
                    self.node_mut(node).request = None;
                    self.act(node);
                }
            }
            Ev::TimerFire { node, slot } => self.on_timer(node, slot),
            Ev::FastCommit { slot } => self.on_fast_commit(slot),
            Ev::FallbackDecide { slot } => self.on_fallback(slot),
            Ev::FinalizeAt { node, slot } => self.finalize_decided(node, slot),
            Ev::Crash { node } => {
                if !self.node(node).crashed {
                    let st = self.node_mut(node);
                    st.crashed = true;
                    st.cpu.clear();
                    st.queued.clear();
                    self.emit(Some(node), None, EventKind::Crash);
                }
            }
            Ev::Phase { index } => self.emit(None, None, EventKind::Phase { index }),
            Ev::Wake { node } => {
                if self.node(node).wake_at == Some(self.now) {
                    self.node_mut(node).wake_at = None;
                }
                self.act(node);
            }
            Ev::End => {
                self.ended = true;
            }
        }
    }

    // ----- CPU -----

    fn cpu_kick(&mut self, id: NodeId) {
        loop {
            let st = self.node(id);
            if st.crashed || st.busy {
                return;
            }
            let Some(work) = self.node_mut(id).cpu.pop_front() else {
                return;
            };
            let cm = self.faults.compute_multiplier(id, self.now);
            let cost = match &work {
                Work::Create { slot, .. } if !self.node(id).is_open(*slot) => {
                    self.node_mut(id).create_pending = false;
                    self.try_propose(id);
                    continue;
                }
                Work::Create { .. } => {
                    let sm = self.faults.serialization_multiplier(id, self.now);
                    Self::scaled(self.costs.create, cm)
                        + Self::scaled(self.costs.serialization * (self.n as Micros - 1), sm)
                }
                Work::Process { block } => {
                    if self.node(id).log.is_finalized(block.slot) {
                        self.dec_queued(id, block.slot);
                        continue;
                    }
                    if self.stale(block.slot) {
                        self.dec_queued(id, block.slot);
                        self.catch_up(id, block.slot);
                        continue;
                    }
                    Self::scaled(self.costs.process, cm)
                }
            };
            self.node_mut(id).busy = true;
            self.schedule(self.now + cost, Ev::CpuDone { node: id, work });
            return;
        }
    }

    /// Decided long enough ago that a lagging node takes the outcome by
    /// state transfer instead of validating the proposal.
    fn stale(&self, sn: SlotNumber) -> bool {
        self.slots
            .get(&sn)
            .and_then(|r| r.arb.decision())
            .is_some_and(|(_, _, at)| self.now.saturating_sub(*at) >= self.costs.catchup)
    }

    fn catch_up(&mut self, id: NodeId, sn: SlotNumber) {
        if self.node(id).log.is_finalized(sn) {
            return;
        }
        let Some((value, via, _)) = self.slots.get(&sn).and_then(|r| r.arb.decision()).cloned() else {
            return;
        };
        self.finalize_local(id, sn, value, via);
    }

    fn dec_queued(&mut self, id: NodeId, sn: SlotNumber) {
        let st = self.node_mut(id);
        if let Some(c) = st.queued.get_mut(&sn) {
            *c -= 1;
            if *c == 0 {
                st.queued.remove(&sn);
            }
        }
    }

    fn on_cpu_done(&mut self, id: NodeId, work: Work) {
        if self.node(id).crashed {
            return;
        }
        self.node_mut(id).busy = false;
        match work {
            Work::Create { slot, intent, ticket } => self.finish_create(id, slot, intent, ticket),
            Work::Process { block } => {
                self.dec_queued(id, block.slot);
                self.finish_process(id, block);
            }
        }
        self.cpu_kick(id);
        self.act(id);
    }

    fn finish_create(&mut self, id: NodeId, slot: SlotNumber, intent: Micros, ticket: TicketProof) {
        self.node_mut(id).create_pending = false;
        if !self.node(id).is_open(slot) {
            return;
        }
        let now = self.now;
        let payload = self.node_mut(id).supply.take(now);
        let block = Arc::new(Block::new(id, slot, payload, ticket));
        let value = SlotValue::Block(block.clone()).id();
        self.emit(Some(id), Some(slot), EventKind::Propose { value, since: intent });
        {
            let st = self.node_mut(id);
            st.processed.insert((slot, value));
            st.max_seen = st.max_seen.max(slot.0);
        }
        for j in 0..self.n {
            let to = NodeId(j as u32);
            if to == id {
                continue;
            }
            if let Some(d) = self.delay(id, to) {
                self.schedule(
                    self.now + d,
                    Ev::Deliver {
                        to,
                        block: block.clone(),
                    },
                );
            }
        }
        self.slots.entry(slot).or_default().arb.observe(&block);
        self.try_accept(id, &block);
    }

    fn finish_process(&mut self, id: NodeId, block: Arc<Block>) {
        let sn = block.slot;
        let value = SlotValue::Block(block.clone()).id();
        self.node_mut(id).processed.insert((sn, value));
        let verdict = self.check(id, &block);
        if verdict == Verdict::Undefined {
            let e = epoch_of(sn, self.epoch_len);
            self.node_mut(id).buffered.entry(e).or_default().push(block.clone());
        }
        if let Some(pending) = self.node(id).pending_finalize.get(&sn) {
            let matches = pending.id() == value;
            if matches || !self.node(id).queued.contains_key(&sn) {
                self.finalize_decided(id, sn);
            }
        }
    }

    /// Ticket check with trace entry; valid proposals are accepted.
    fn check(&mut self, id: NodeId, block: &Arc<Block>) -> Verdict {
        let verdict = if block.is_well_formed() {
            verify_ticket(&self.node(id).epochs, block.slot, block.sender, &block.ticket)
        } else {
            Verdict::Invalid
        };
        self.emit(
            Some(id),
            Some(block.slot),
            EventKind::TicketCheck {
                proposer: block.sender,
                proof: block.ticket.encode(),
                verdict,
            },
        );
        if verdict == Verdict::Valid {
            self.slots.entry(block.slot).or_default().arb.observe(block);
            self.try_accept(id, block);
        }
        verdict
    }

    // ----- agreement -----

    fn try_accept(&mut self, id: NodeId, block: &Arc<Block>) {
        let sn = block.slot;
        let st = self.node(id);
        if st.crashed || !st.is_open(sn) || st.accepted.contains(&sn) {
            return;
        }
        self.node_mut(id).accepted.insert(sn);
        let now = self.now;
        let outcome = self
            .slots
            .entry(sn)
            .or_default()
            .arb
            .accept(id, block, now, self.quorum);
        let AcceptOutcome::QuorumReached(quorum) = outcome else {
            return;
        };
        let receivers: Vec<NodeId> = self.nodes.iter().filter(|s| !s.crashed).map(|s| s.id).collect();
        let net = self.net;
        let faults = &self.faults;
        let rng = &mut self.rng;
        let costs = &self.costs;
        let times = fast_path_times(&quorum, &receivers, |from, to| {
            let d = sample_delay(&net, now, from, to, rng).unwrap_or(net.gst.saturating_sub(now) + net.base);
            d + Self::scaled(costs.serialization, faults.serialization_multiplier(from, now))
                + Self::scaled(costs.vote, faults.compute_multiplier(to, now))
        });
        let first = times.values().copied().min().unwrap_or(now);
        let rec = self.slots.get_mut(&sn).expect("slot record");
        if rec.arb.plan_fast(first) {
            rec.fast_times = times;
            self.schedule(first, Ev::FastCommit { slot: sn });
        }
    }

    fn on_fast_commit(&mut self, sn: SlotNumber) {
        let now = self.now;
        let quorum = self.quorum;
        let rec = self.slots.get_mut(&sn).expect("slot record");
        if rec.arb.decide_fast(now, quorum).is_none() {
            return;
        }
        let times = std::mem::take(&mut rec.fast_times);
        for (r, t) in times {
            if t <= now {
                self.finalize_decided(r, sn);
            } else {
                self.schedule(t, Ev::FinalizeAt { node: r, slot: sn });
            }
        }
    }

    fn on_timer(&mut self, id: NodeId, sn: SlotNumber) {
        let st = self.node(id);
        if st.crashed || st.log.is_finalized(sn) || st.is_expired(sn) || !st.timers.contains_key(&sn) {
            return;
        }
        self.node_mut(id).timers.insert(sn, TimerRec { expired: true });
        self.emit(Some(id), Some(sn), EventKind::TimerExpire);
        let (now, latency) = (self.now, self.fallback);
        if let Some(at) = self.slots.entry(sn).or_default().arb.start_fallback(now, latency) {
            self.schedule(at, Ev::FallbackDecide { slot: sn });
        }
    }

    fn on_fallback(&mut self, sn: SlotNumber) {
        let now = self.now;
        let quorum = self.quorum;
        let rec = self.slots.get_mut(&sn).expect("slot record");
        if rec.arb.decide_fallback(now, quorum).is_none() {
            return;
        }
        for i in 0..self.n {
            self.finalize_decided(NodeId(i as u32), sn);
        }
    }

    /// Applies the global decision at one node, waiting for the node to
    /// validate the decided block if it is still queued there.
    fn finalize_decided(&mut self, id: NodeId, sn: SlotNumber) {
        let st = self.node(id);
        if st.crashed || st.log.is_finalized(sn) {
            return;
        }
        let Some((value, via, _)) = self.slots.get(&sn).and_then(|r| r.arb.decision()).cloned() else {
            return;
        };
        if !value.is_bottom() && !st.processed.contains(&(sn, value.id())) && st.queued.contains_key(&sn) {
            self.node_mut(id).pending_finalize.insert(sn, value);
            return;
        }
        self.finalize_local(id, sn, value, via);
    }

    fn finalize_local(&mut self, id: NodeId, sn: SlotNumber, value: SlotValue, via: Via) {
        let vid = value.id();
        self.node_mut(id)
            .log
            .finalize(sn, value)
            .expect("the arbiter decides each slot once");
        self.node_mut(id).pending_finalize.remove(&sn);
        self.emit(Some(id), Some(sn), EventKind::Finalize { value: vid, via });
        let commits = self.node_mut(id).log.advance_commits();
        for c in &commits {
            self.emit(Some(id), Some(c.slot), EventKind::LogCommit { value: c.value.id() });
        }
        for c in &commits {
            if c.slot.0 % self.epoch_len == 0 {
                self.epoch_complete(id, EpochNumber(c.slot.0 / self.epoch_len));
            }
        }
        if !commits.is_empty() {
            self.node_mut(id).prune();
        }
        self.arm(id);
        self.act(id);
    }

    fn epoch_complete(&mut self, id: NodeId, epoch: EpochNumber) {
        let senders: Vec<Option<NodeId>> = epoch_slots(epoch, self.epoch_len)
            .map(|sn| {
                self.node(id)
                    .log
                    .state(SlotNumber(sn))
                    .value()
                    .and_then(SlotValue::sender)
            })
            .collect();
        let decided = self
            .node_mut(id)
            .epochs
            .on_epoch_committed(epoch, &senders)
            .expect("epochs commit once and in full");
        let Some(state) = decided else {
            return;
        };
        self.emit(
            Some(id),
            None,
            EventKind::EpochDecided {
                epoch: state.epoch,
                regime: state.regime,
                candidates: state.candidates.clone(),
            },
        );
        let buffered = self.node_mut(id).buffered.remove(&state.epoch).unwrap_or_default();
        for block in buffered {
            self.check(id, &block);
            self.start_timer_if_idle(id, block.slot);
        }
    }

    // ----- timers -----

    fn start_timer_if_idle(&mut self, id: NodeId, sn: SlotNumber) {
        let st = self.node(id);
        if st.crashed || st.log.is_finalized(sn) || st.timers.contains_key(&sn) || st.epochs.lookup_slot(sn).is_none() {
            return;
        }
        let timer = self.pacemaker.start(sn, self.now);
        self.node_mut(id).timers.insert(sn, TimerRec { expired: false });
        self.emit(
            Some(id),
            Some(sn),
            EventKind::TimerStart {
                expires: timer.expires(),
            },
        );
        self.schedule(timer.expires(), Ev::TimerFire { node: id, slot: sn });
    }

    /// Starts timers for every slot that entered the node's window.
    fn arm(&mut self, id: NodeId) {
        let st = self.node(id);
        if st.crashed {
            return;
        }
        let mut bound = self.policy.limit(st.log.frontier()).map_or(st.max_seen, |s| s.0);
        if self.ended {
            bound = bound.min(st.max_seen);
        }
        let mut sn = st.armed_upto + 1;
        while sn <= bound {
            if self.node(id).epochs.lookup_slot(SlotNumber(sn)).is_none() {
                break;
            }
            self.start_timer_if_idle(id, SlotNumber(sn));
            self.node_mut(id).armed_upto = sn;
            sn += 1;
        }
    }

    // ----- network handlers -----

    fn on_deliver(&mut self, to: NodeId, block: Arc<Block>) {
        if self.node(to).crashed {
            return;
        }
        let sn = block.slot;
        self.emit(Some(to), Some(sn), EventKind::Deliver { from: block.sender });
        {
            let st = self.node_mut(to);
            st.max_seen = st.max_seen.max(sn.0);
            st.cpu.push_back(Work::Process { block });
            *st.queued.entry(sn).or_default() += 1;
        }
        self.start_timer_if_idle(to, sn);
        self.cpu_kick(to);
        self.arm(to);
        self.act(to);
    }

    fn on_request(&mut self, server: NodeId, from: NodeId, epoch: EpochNumber, id: u64) {
        if self.node(server).crashed {
            return;
        }
        let mode = self.faults.server_mode(server, self.now);
        let batch_size = self.batch;
        let st = &mut self.nodes[server.index()];
        let (log, timers, epochs) = (&st.log, &st.timers, &st.epochs);
        let batch = st.server.grant_batch(epochs, from, batch_size, epoch, &mode, |sn| {
            !log.is_finalized(sn) && !timers.get(&sn).is_some_and(|t| t.expired)
        });
        self.emit(
            Some(server),
            None,
            EventKind::Grant {
                grantee: from,
                slots: batch.slots().collect(),
            },
        );
        if let Some(d) = self.delay(server, from) {
            self.schedule(
                self.now + self.costs.grant + d,
                Ev::GrantArrive {
                    to: from,
                    batch,
                    id,
                    epoch,
                },
            );
        }
    }

    fn on_grant(&mut self, to: NodeId, batch: GrantBatch, id: u64, epoch: EpochNumber) {
        if self.node(to).crashed {
            return;
        }
        let now = self.now;
        let retry = now + self.timeout;
        let mtr = matches!(self.regime, RegimeSpec::Mtr { .. });
        let st = self.node_mut(to);
        if st.request.as_ref().is_some_and(|r| r.id == id) {
            st.request = None;
        }
        if batch.is_empty() {
            st.exhausted.insert(epoch, retry);
            self.wake(to, retry);
        } else {
            for t in &batch.tickets {
                let sn = t.slot();
                if st.is_open(sn) && !st.proposed.contains(&sn) {
                    st.held.insert(sn, t.clone());
                }
            }
            if mtr {
                st.last_batch = Some(batch.slots().collect());
            }
        }
        self.act(to);
    }

    fn wake(&mut self, id: NodeId, at: Micros) {
        let now = self.now;
        let st = self.node_mut(id);
        if st.wake_at.is_some_and(|w| w >= now && w <= at) {
            return;
        }
        st.wake_at = Some(at);
        self.schedule(at, Ev::Wake { node: id });
    }

    // ----- proposer behaviour -----

    fn act(&mut self, id: NodeId) {
        if self.node(id).crashed {
            return;
        }
        self.try_propose(id);
        self.try_request(id);
    }

    /// Highest slot the node may propose into right now.
    fn upper(&self, st: &NodeState) -> Option<u64> {
        let lim = self.policy.limit(st.log.frontier()).map(|s| s.0);
        if self.ended {
            Some(lim.map_or(st.max_seen, |l| l.min(st.max_seen)))
        } else {
            lim
        }
    }

    fn next_ticket(&self, id: NodeId) -> Option<(SlotNumber, TicketProof)> {
        let st = self.node(id);
        let upper = self.upper(st);
        let mut best: Option<(SlotNumber, TicketProof)> = None;
        if !matches!(self.regime, RegimeSpec::Mtr { .. }) {
            let top = upper.expect("windowed regimes have a limit");
            let mut sn = st.log.frontier().0 + 1;
            while sn <= top {
                let slot = SlotNumber(sn);
                let Some(view) = st.epochs.lookup_slot(slot) else {
                    break;
                };
                if view.regime == TicketRegime::Unmanaged
                    && view.round_robin_owner(slot) == id
                    && !st.proposed.contains(&slot)
                    && st.is_open(slot)
                {
                    best = Some((slot, TicketProof::RoundRobin { slot }));
                    break;
                }
                sn += 1;
            }
        }
        let held = st
            .held
            .iter()
            .find(|(sn, _)| upper.is_none_or(|u| sn.0 <= u) && st.is_open(**sn) && !st.proposed.contains(sn));
        if let Some((sn, t)) = held {
            if best.as_ref().is_none_or(|(b, _)| sn < b) {
                best = Some((*sn, t.clone()));
            }
        }
        best
    }

    fn try_propose(&mut self, id: NodeId) {
        if self.node(id).create_pending {
            return;
        }
        if self.ended && self.node(id).max_seen == 0 {
            return;
        }
        let now = self.now;
        if !self.node(id).supply.available(now) {
            if let Some(at) = self.node(id).supply.next_available(now) {
                if !self.ended {
                    self.wake(id, at);
                }
            }
            return;
        }
        while let Some((sn, ticket)) = self.next_ticket(id) {
            let silent = self.faults.is_silent(id, now, sn);
            let st = self.node_mut(id);
            st.held.remove(&sn);
            st.proposed.insert(sn);
            if silent {
                continue;
            }
            st.create_pending = true;
            let intent = st.supply.ready_at().min(now);
            st.cpu.push_back(Work::Create {
                slot: sn,
                intent,
                ticket,
            });
            self.cpu_kick(id);
            return;
        }
    }

    fn try_request(&mut self, id: NodeId) {
        if self.ended {
            return;
        }
        let st = self.node(id);
        if st.request.is_some() {
            return;
        }
        if st.held.keys().any(|sn| st.is_open(*sn) && !st.proposed.contains(sn)) {
            return;
        }
        let now = self.now;
        let first_open = epoch_of(st.log.frontier().next(), self.epoch_len);
        let target = match &self.regime {
            RegimeSpec::Utr { .. } => None,
            RegimeSpec::Mtr { server, .. } => {
                let ready = mtr_request_gate(&st.log, st.last_batch.as_deref())
                    && st.exhausted.get(&first_open).is_none_or(|t| *t <= now);
                ready.then_some((first_open, *server))
            }
            RegimeSpec::Htr { .. } => {
                let limit = self.policy.limit(st.log.frontier()).map_or(u64::MAX, |s| s.0);
                let mut e = first_open;
                let mut found = None;
                while let Some(view) = st.epochs.lookup(e) {
                    if *epoch_slots(e, self.epoch_len).start() > limit {
                        break;
                    }
                    if let TicketRegime::Managed { server } = view.regime {
                        if view.candidates.contains(&id) && st.exhausted.get(&e).is_none_or(|t| *t <= now) {
                            found = Some((e, server));
                            break;
                        }
                    }
                    e = EpochNumber(e.0 + 1);
                }
                found
            }
        };
        let Some((epoch, server)) = target else {
            return;
        };
        self.next_request += 1;
        let rid = self.next_request;
        self.node_mut(id).request = Some(OutstandingRequest { id: rid });
        self.emit(Some(id), None, EventKind::Request { server });
        if let Some(d) = self.delay(id, server) {
            self.schedule(
                now + d,
                Ev::RequestArrive {
                    server,
                    from: id,
                    epoch,
                    id: rid,
                },
            );
        }
        self.schedule(now + self.timeout, Ev::RequestTimeout { node: id, id: rid });
    }
}
