//! Per-node view of the replicated log.
//!
//! Slots move `Unwritten -> Finalized -> Committed`. Finality may happen out
//! of order; commitment only ever extends the contiguous finalized prefix,
//! and every promotion is reported exactly once as a [`LogCommit`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ticketing::TicketProof;
use crate::types::{NodeId, SlotNumber};

/// A proposed value for one slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub sender: NodeId,
    pub slot: SlotNumber,
    pub payload: Vec<u8>,
    pub ticket: TicketProof,
}

impl Block {
    pub fn new(sender: NodeId, slot: SlotNumber, payload: Vec<u8>, ticket: TicketProof) -> Self {
        Self {
            sender,
            slot,
            payload,
            ticket,
        }
    }

    /// Stable 64-bit content digest used by the trace.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.sender.0.to_be_bytes());
        h.update(self.slot.0.to_be_bytes());
        h.update((self.payload.len() as u64).to_be_bytes());
        h.update(&self.payload);
        h.update(self.ticket.encode().as_bytes());
        let out = h.finalize();
        u64::from_be_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
    }

    /// The slot and grantee carried by the ticket agree with the block header.
    pub fn is_well_formed(&self) -> bool {
        self.ticket.slot() == self.slot
            && match &self.ticket {
                TicketProof::RoundRobin { .. } => true,
                TicketProof::ServerGrant { grantee, .. } => *grantee == self.sender,
            }
    }
}

/// Content of a finalized slot: a block or the special skip value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotValue {
    Bottom,
    Block(Arc<Block>),
}

impl SlotValue {
    pub fn is_bottom(&self) -> bool {
        matches!(self, SlotValue::Bottom)
    }

    pub fn block(&self) -> Option<&Block> {
        match self {
            SlotValue::Bottom => None,
            SlotValue::Block(b) => Some(b),
        }
    }

    pub fn sender(&self) -> Option<NodeId> {
        self.block().map(|b| b.sender)
    }

    pub fn id(&self) -> ValueId {
        match self {
            SlotValue::Bottom => ValueId::Bottom,
            SlotValue::Block(b) => ValueId::Block {
                sender: b.sender,
                digest: b.digest(),
            },
        }
    }
}

/// Compact identity of a slot value, as written to traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueId {
    Bottom,
    Block { sender: NodeId, digest: u64 },
}

impl ValueId {
    pub fn sender(self) -> Option<NodeId> {
        match self {
            ValueId::Bottom => None,
            ValueId::Block { sender, .. } => Some(sender),
        }
    }

    pub fn is_bottom(self) -> bool {
        matches!(self, ValueId::Bottom)
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueId::Bottom => write!(f, "bot"),
            ValueId::Block { sender, digest } => write!(f, "{sender}:{digest:016x}"),
        }
    }
}

impl std::str::FromStr for ValueId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bot" {
            return Ok(ValueId::Bottom);
        }
        let (sender, digest) = s.split_once(':').ok_or_else(|| format!("bad value `{s}`"))?;
        Ok(ValueId::Block {
            sender: NodeId(sender.parse().map_err(|_| format!("bad sender in `{s}`"))?),
            digest: u64::from_str_radix(digest, 16).map_err(|_| format!("bad digest in `{s}`"))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotState {
    Unwritten,
    Finalized(SlotValue),
    Committed(SlotValue),
}

impl SlotState {
    pub fn value(&self) -> Option<&SlotValue> {
        match self {
            SlotState::Unwritten => None,
            SlotState::Finalized(v) | SlotState::Committed(v) => Some(v),
        }
    }

    pub fn is_written(&self) -> bool {
        !matches!(self, SlotState::Unwritten)
    }
}

/// Notification that `slot` became committed with `value`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogCommit {
    pub slot: SlotNumber,
    pub value: SlotValue,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("slot numbers start at 1")]
    SlotZero,
    #[error("slot {slot} already finalized with {existing}, refusing {proposed}")]
    Conflict {
        slot: SlotNumber,
        existing: ValueId,
        proposed: ValueId,
    },
}

#[derive(Clone, Debug, Default)]
pub struct LogView {
    slots: BTreeMap<SlotNumber, SlotState>,
    frontier: u64,
}

impl LogView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self, sn: SlotNumber) -> &SlotState {
        self.slots.get(&sn).unwrap_or(&SlotState::Unwritten)
    }

    pub fn is_finalized(&self, sn: SlotNumber) -> bool {
        self.state(sn).is_written()
    }

    /// Highest slot with every slot at or below it committed (0 when empty).
    pub fn frontier(&self) -> SlotNumber {
        SlotNumber(self.frontier)
    }

    /// Records a finality decision. Re-finalizing with the same value is a
    /// no-op; with a different value it is an error and the log is unchanged.
    pub fn finalize(&mut self, sn: SlotNumber, value: SlotValue) -> Result<bool, LogError> {
        if sn.0 == 0 {
            return Err(LogError::SlotZero);
        }
        match self.slots.get(&sn) {
            Some(existing) => {
                let old = existing.value().expect("stored slots are written");
                if *old == value {
                    Ok(false)
                } else {
                    Err(LogError::Conflict {
                        slot: sn,
                        existing: old.id(),
                        proposed: value.id(),
                    })
                }
            }
            None => {
                self.slots.insert(sn, SlotState::Finalized(value));
                Ok(true)
            }
        }
    }

    /// Promotes the finalized prefix to committed and returns the newly
    /// committed slots in ascending order.
    pub fn advance_commits(&mut self) -> Vec<LogCommit> {
        let mut out = Vec::new();
        loop {
            let next = SlotNumber(self.frontier + 1);
            let Some(state) = self.slots.get_mut(&next) else {
                break;
            };
            let value = match state {
                SlotState::Finalized(v) => v.clone(),
                SlotState::Committed(_) => unreachable!("committed slot above the frontier"),
                SlotState::Unwritten => break,
            };
            *state = SlotState::Committed(value.clone());
            self.frontier = next.0;
            out.push(LogCommit { slot: next, value });
        }
        out
    }

    /// Finalized slots strictly above the commit frontier.
    pub fn finalized_above_frontier(&self) -> usize {
        self.slots
            .range(SlotNumber(self.frontier + 1)..)
            .filter(|(_, s)| matches!(s, SlotState::Finalized(_)))
            .count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SlotNumber, &SlotState)> {
        self.slots.iter().map(|(k, v)| (*k, v))
    }
}

/// Advances the frontier of `log` and returns it together with the commits
/// it produced.
pub fn commit_frontier(log: &mut LogView) -> (SlotNumber, Vec<LogCommit>) {
    let commits = log.advance_commits();
    (log.frontier(), commits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(sender: u32, sn: u64) -> SlotValue {
        SlotValue::Block(Arc::new(Block::new(
            NodeId(sender),
            SlotNumber(sn),
            vec![0, 1],
            TicketProof::RoundRobin { slot: SlotNumber(sn) },
        )))
    }

    #[test]
    fn hole_blocks_commit() {
        let mut log = LogView::new();
        for sn in [1, 2, 4] {
            log.finalize(SlotNumber(sn), block(0, sn)).unwrap();
        }
        let (f, commits) = commit_frontier(&mut log);
        assert_eq!(f, SlotNumber(2));
        assert_eq!(commits.len(), 2);
        assert_eq!(log.finalized_above_frontier(), 1);
        assert!(matches!(log.state(SlotNumber(4)), SlotState::Finalized(_)));
        assert_eq!(log.state(SlotNumber(3)), &SlotState::Unwritten);
    }

    #[test]
    fn empty_log_frontier_is_zero() {
        let mut log = LogView::new();
        assert_eq!(commit_frontier(&mut log), (SlotNumber::NONE, vec![]));
    }

    #[test]
    fn bottom_slots_commit_too() {
        let mut log = LogView::new();
        log.finalize(SlotNumber(1), SlotValue::Bottom).unwrap();
        log.finalize(SlotNumber(2), block(1, 2)).unwrap();
        let (f, commits) = commit_frontier(&mut log);
        assert_eq!(f, SlotNumber(2));
        assert_eq!(commits[0].value, SlotValue::Bottom);
        assert_eq!(commits[1].slot, SlotNumber(2));
        // fires once
        assert!(log.advance_commits().is_empty());
    }

    #[test]
    fn filling_a_hole_commits_in_ascending_batch() {
        let mut log = LogView::new();
        for sn in [2, 3, 4] {
            log.finalize(SlotNumber(sn), block(0, sn)).unwrap();
        }
        assert!(log.advance_commits().is_empty());
        log.finalize(SlotNumber(1), SlotValue::Bottom).unwrap();
        let slots: Vec<_> = log.advance_commits().iter().map(|c| c.slot.0).collect();
        assert_eq!(slots, vec![1, 2, 3, 4]);
    }

    #[test]
    fn finalized_value_is_immutable() {
        let mut log = LogView::new();
        log.finalize(SlotNumber(1), block(0, 1)).unwrap();
        assert_eq!(log.finalize(SlotNumber(1), block(0, 1)), Ok(false));
        let err = log.finalize(SlotNumber(1), SlotValue::Bottom).unwrap_err();
        assert!(matches!(err, LogError::Conflict { .. }));
        assert_eq!(log.state(SlotNumber(1)).value(), Some(&block(0, 1)));
        assert_eq!(log.finalize(SlotNumber(0), SlotValue::Bottom), Err(LogError::SlotZero));
    }

    #[test]
    fn value_id_round_trips_through_text() {
        for v in [block(3, 9).id(), ValueId::Bottom] {
            assert_eq!(v.to_string().parse::<ValueId>().unwrap(), v);
        }
    }
}
