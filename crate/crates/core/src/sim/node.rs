//! Local state of one simulated node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::harness::PayloadSupply;
use crate::log::{Block, LogView, SlotValue, ValueId};
use crate::ticketing::{EpochTable, GrantServer, TicketProof};
use crate::types::{EpochNumber, Micros, NodeId, SlotNumber};

#[derive(Clone, Debug)]
pub(crate) enum Work {
    Create {
        slot: SlotNumber,
        intent: Micros,
        ticket: TicketProof,
    },
    Process {
        block: Arc<Block>,
    },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TimerRec {
    pub expired: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct OutstandingRequest {
    pub id: u64,
}

pub(crate) struct NodeState {
    pub id: NodeId,
    pub log: LogView,
    pub epochs: EpochTable,
    pub crashed: bool,

    pub cpu: VecDeque<Work>,
    pub busy: bool,
    pub create_pending: bool,
    /// Queued `Process` items per slot.
    pub queued: BTreeMap<SlotNumber, usize>,
    pub processed: BTreeSet<(SlotNumber, ValueId)>,
    /// Decided blocks this node will finalize once it has processed them.
    pub pending_finalize: BTreeMap<SlotNumber, SlotValue>,

    pub timers: BTreeMap<SlotNumber, TimerRec>,
    /// Every slot up to here was considered for a window timer.
    pub armed_upto: u64,
    pub accepted: BTreeSet<SlotNumber>,
    /// Proposals whose epoch was not yet decided here.
    pub buffered: BTreeMap<EpochNumber, Vec<Arc<Block>>>,
    pub max_seen: u64,

    /// Slots this node proposed or deliberately withheld.
    pub proposed: BTreeSet<SlotNumber>,
    pub held: BTreeMap<SlotNumber, TicketProof>,
    pub last_batch: Option<Vec<SlotNumber>>,
    pub request: Option<OutstandingRequest>,
    /// Epochs whose server had nothing for us, with the retry time.
    pub exhausted: BTreeMap<EpochNumber, Micros>,
    pub supply: PayloadSupply,
    pub wake_at: Option<Micros>,

    pub server: GrantServer,
}

impl NodeState {
    pub fn new(id: NodeId, epochs: EpochTable, supply: PayloadSupply) -> Self {
        Self {
            id,
            log: LogView::new(),
            epochs,
            crashed: false,
            cpu: VecDeque::new(),
            busy: false,
            create_pending: false,
            queued: BTreeMap::new(),
            processed: BTreeSet::new(),
            pending_finalize: BTreeMap::new(),
            timers: BTreeMap::new(),
            armed_upto: 0,
            accepted: BTreeSet::new(),
            buffered: BTreeMap::new(),
            max_seen: 0,
            proposed: BTreeSet::new(),
            held: BTreeMap::new(),
            last_batch: None,
            request: None,
            exhausted: BTreeMap::new(),
            supply,
            wake_at: None,
            server: GrantServer::new(id),
        }
    }

    pub fn is_expired(&self, sn: SlotNumber) -> bool {
        self.timers.get(&sn).is_some_and(|t| t.expired)
    }

    /// Open for proposing or accepting: not finalized and not ejected.
    pub fn is_open(&self, sn: SlotNumber) -> bool {
        !self.log.is_finalized(sn) && !self.is_expired(sn)
    }

    /// Drops bookkeeping for slots at or below the commit frontier.
    pub fn prune(&mut self) {
        let keep = SlotNumber(self.log.frontier().0 + 1);
        self.timers = self.timers.split_off(&keep);
        self.accepted = self.accepted.split_off(&keep);
        self.proposed = self.proposed.split_off(&keep);
        self.held = self.held.split_off(&keep);
        self.processed = self.processed.split_off(&(keep, ValueId::Bottom));
    }
}
