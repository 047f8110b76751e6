//! Simulated per-slot agreement.
//!
//! Each slot runs a fast path (three message rounds among a quorum of
//! `2f+1` acceptors) racing against the slot timers. The first timer expiry
//! at a live node starts the fallback, an atomic step that after `δ_fb`
//! decides the quorum-accepted proposal or `⊥`. Whichever completes first
//! fixes the value for every node.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::log::{Block, SlotValue, ValueId};
use crate::types::{Micros, NodeId, SlotNumber};

/// Path that produced a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Via {
    Fast,
    Fallback,
}

impl fmt::Display for Via {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Via::Fast => "fast",
            Via::Fallback => "fallback",
        })
    }
}

impl std::str::FromStr for Via {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Via::Fast),
            "fallback" => Ok(Via::Fallback),
            _ => Err(format!("unknown path `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotTimer {
    pub slot: SlotNumber,
    pub start: Micros,
    pub duration: Micros,
}

impl SlotTimer {
    pub fn expires(&self) -> Micros {
        self.start + self.duration
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalizationDecision {
    pub slot: SlotNumber,
    pub value: SlotValue,
    pub decided_at: Micros,
    pub via: Via,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacemakerError {
    #[error("slot timeout {timeout} us must exceed the delay bound {delta} us")]
    TimeoutNotAboveDelta { timeout: Micros, delta: Micros },
}

/// Timer length of the pacemaker; rejects timeouts that cannot outlast the
/// post-GST delay bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pacemaker {
    timeout: Micros,
    delta: Micros,
}

impl Pacemaker {
    pub fn new(timeout: Micros, delta: Micros) -> Result<Self, PacemakerError> {
        if timeout <= delta {
            return Err(PacemakerError::TimeoutNotAboveDelta { timeout, delta });
        }
        Ok(Self { timeout, delta })
    }

    pub fn start(&self, slot: SlotNumber, now: Micros) -> SlotTimer {
        SlotTimer {
            slot,
            start: now,
            duration: self.timeout,
        }
    }

    /// Guaranteed overlap of correct nodes' timers after GST.
    pub fn overlap(&self) -> Micros {
        self.timeout - self.delta
    }
}

/// One distinct proposal seen for a slot and who accepted it, in order.
#[derive(Clone, Debug)]
struct Candidate {
    block: Arc<Block>,
    acceptors: Vec<(NodeId, Micros)>,
}

/// Outcome of recording an acceptance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AcceptOutcome {
    Recorded,
    /// This acceptance completed an uncontested quorum; the caller computes
    /// the fast-path completion times for these acceptors.
    QuorumReached(Vec<(NodeId, Micros)>),
}

/// Global arbiter of one slot.
#[derive(Clone, Debug, Default)]
pub struct SlotArbiter {
    candidates: Vec<Candidate>,
    fallback_at: Option<Micros>,
    fast_at: Option<Micros>,
    decision: Option<(SlotValue, Via, Micros)>,
}

impl SlotArbiter {
    pub fn decision(&self) -> Option<&(SlotValue, Via, Micros)> {
        self.decision.as_ref()
    }

    pub fn is_decided(&self) -> bool {
        self.decision.is_some()
    }

    pub fn is_contested(&self) -> bool {
        self.candidates.len() > 1
    }

    pub fn fallback_started(&self) -> bool {
        self.fallback_at.is_some()
    }

    /// Registers a proposal value; returns true when it is new.
    pub fn observe(&mut self, block: &Arc<Block>) -> bool {
        let id = SlotValue::Block(block.clone()).id();
        if self
            .candidates
            .iter()
            .any(|c| SlotValue::Block(c.block.clone()).id() == id)
        {
            return false;
        }
        self.candidates.push(Candidate {
            block: block.clone(),
            acceptors: Vec::new(),
        });
        true
    }

    /// Records that `node` accepted `block` at `at`. The fast path only
    /// runs while the slot is uncontested.
    pub fn accept(&mut self, node: NodeId, block: &Arc<Block>, at: Micros, quorum: usize) -> AcceptOutcome {
        self.observe(block);
        let contested = self.is_contested();
        let id = SlotValue::Block(block.clone()).id();
        let cand = self
            .candidates
            .iter_mut()
            .find(|c| SlotValue::Block(c.block.clone()).id() == id)
            .expect("observed above");
        if cand.acceptors.iter().any(|(n, _)| *n == node) {
            return AcceptOutcome::Recorded;
        }
        cand.acceptors.push((node, at));
        if cand.acceptors.len() == quorum && !contested && self.decision.is_none() {
            return AcceptOutcome::QuorumReached(cand.acceptors.clone());
        }
        AcceptOutcome::Recorded
    }

    /// Notes the planned fast-path completion; returns whether it is the
    /// earliest known way to decide.
    pub fn plan_fast(&mut self, at: Micros) -> bool {
        if self.decision.is_some() {
            return false;
        }
        self.fast_at = Some(self.fast_at.map_or(at, |t| t.min(at)));
        true
    }

    /// First live timer expiry starts the fallback; returns its decision
    /// time when this call started it.
    pub fn start_fallback(&mut self, now: Micros, latency: Micros) -> Option<Micros> {
        if self.decision.is_some() || self.fallback_at.is_some() {
            return None;
        }
        let at = now + latency;
        self.fallback_at = Some(at);
        Some(at)
    }

    /// Completes the fast path.
    pub fn decide_fast(&mut self, now: Micros, quorum: usize) -> Option<SlotValue> {
        if self.decision.is_some() {
            return None;
        }
        let value = self.quorum_value(quorum)?;
        self.decision = Some((value.clone(), Via::Fast, now));
        Some(value)
    }

    /// Completes the fallback: the quorum-accepted proposal with the lowest
    /// sender, otherwise `⊥`.
    pub fn decide_fallback(&mut self, now: Micros, quorum: usize) -> Option<SlotValue> {
        if self.decision.is_some() {
            return None;
        }
        let value = self.quorum_value(quorum).unwrap_or(SlotValue::Bottom);
        self.decision = Some((value.clone(), Via::Fallback, now));
        Some(value)
    }

    fn quorum_value(&self, quorum: usize) -> Option<SlotValue> {
        self.candidates
            .iter()
            .filter(|c| c.acceptors.len() >= quorum)
            .min_by_key(|c| c.block.sender)
            .map(|c| SlotValue::Block(c.block.clone()))
    }

    pub fn acceptors_of(&self, id: ValueId) -> usize {
        self.candidates
            .iter()
            .find(|c| SlotValue::Block(c.block.clone()).id() == id)
            .map_or(0, |c| c.acceptors.len())
    }
}

/// Fast-path completion time at every receiver: the quorum's acceptance
/// votes travel two further rounds (`t2` at quorum members, `t3` at each
/// receiver). `hop(from, to)` is the one-way cost of a vote, zero for a
/// node talking to itself.
pub fn fast_path_times(
    quorum: &[(NodeId, Micros)],
    receivers: &[NodeId],
    mut hop: impl FnMut(NodeId, NodeId) -> Micros,
) -> BTreeMap<NodeId, Micros> {
    let t2: Vec<(NodeId, Micros)> = quorum
        .iter()
        .map(|&(a, _)| {
            let t = quorum
                .iter()
                .map(|&(b, at)| at + if a == b { 0 } else { hop(b, a) })
                .max()
                .expect("non-empty quorum");
            (a, t)
        })
        .collect();
    receivers
        .iter()
        .map(|&r| {
            let t = t2
                .iter()
                .map(|&(a, at)| at + if a == r { 0 } else { hop(a, r) })
                .max()
                .expect("non-empty quorum");
            (r, t)
        })
        .collect()
}
