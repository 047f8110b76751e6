//! Ticketing: who may propose into which slot.
//!
//! Three regimes are supported:
//!
//! - **UTR**: unmanaged round-robin over a fixed candidate list.
//! - **MTR**: a single ticketing server hands out batches of signed grants.
//! - **HTR**: the hybrid regime. Slots are grouped into epochs of `L` slots
//!   and `K` epochs run concurrently. The outcome of epoch `i` (skipped
//!   slots, distinct active senders) decides the candidate set and regime of
//!   epoch `i + K`, switching between round-robin and a hash-elected server.
//!
//! Every node runs its own [`EpochTable`]; agreement on the committed log is
//! what keeps those tables identical across correct nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::log::LogView;
use crate::types::{epoch_of, epoch_slots, EpochNumber, NodeId, SlotNumber};

/// Unforgeable grant authenticator. Only [`Signer`] for the server can
/// produce a tag that verifies against that server's identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthTag(pub u64);

/// Simulated signing key of one node.
#[derive(Clone, Debug)]
pub struct Signer {
    node: NodeId,
}

impl Signer {
    pub fn new(node: NodeId) -> Self {
        Self { node }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn sign_grant(&self, slot: SlotNumber, grantee: NodeId) -> AuthTag {
        grant_tag(self.node, slot, grantee)
    }
}

fn grant_tag(signer: NodeId, slot: SlotNumber, grantee: NodeId) -> AuthTag {
    let mut h = Sha256::new();
    h.update(b"ticketforge/grant/v1");
    h.update(signer.0.to_be_bytes());
    h.update(slot.0.to_be_bytes());
    h.update(grantee.0.to_be_bytes());
    let out = h.finalize();
    AuthTag(u64::from_be_bytes(out[..8].try_into().expect("32-byte digest")))
}

/// Checks that `tag` was produced by `server` for `(slot, grantee)`.
pub fn verify_grant_tag(server: NodeId, slot: SlotNumber, grantee: NodeId, tag: AuthTag) -> bool {
    grant_tag(server, slot, grantee) == tag
}

/// Proof of proposing rights carried inside a block.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TicketProof {
    /// Implicit right from the round-robin position.
    RoundRobin { slot: SlotNumber },
    /// Explicit grant signed by a ticketing server.
    ServerGrant {
        slot: SlotNumber,
        grantee: NodeId,
        server: NodeId,
        auth: AuthTag,
    },
}

impl TicketProof {
    pub fn slot(&self) -> SlotNumber {
        match self {
            TicketProof::RoundRobin { slot } | TicketProof::ServerGrant { slot, .. } => *slot,
        }
    }

    /// Compact text form used in traces: `rr` or `g<server>.<grantee>.<auth>`.
    pub fn encode(&self) -> String {
        match self {
            TicketProof::RoundRobin { .. } => "rr".to_string(),
            TicketProof::ServerGrant {
                grantee, server, auth, ..
            } => format!("g{server}.{grantee}.{:016x}", auth.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Valid,
    Invalid,
    Undefined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "valid",
            Verdict::Invalid => "invalid",
            Verdict::Undefined => "undefined",
        })
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid" => Ok(Verdict::Valid),
            "invalid" => Ok(Verdict::Invalid),
            "undefined" => Ok(Verdict::Undefined),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Regime of a single epoch (`TR` in the hybrid protocol, where `-1` is
/// unmanaged and any other value is the server id).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TicketRegime {
    Unmanaged,
    Managed { server: NodeId },
}

impl TicketRegime {
    pub fn as_tr(self) -> i64 {
        match self {
            TicketRegime::Unmanaged => -1,
            TicketRegime::Managed { server } => server.0 as i64,
        }
    }

    pub fn from_tr(tr: i64) -> Self {
        if tr < 0 {
            TicketRegime::Unmanaged
        } else {
            TicketRegime::Managed {
                server: NodeId(tr as u32),
            }
        }
    }

    pub fn server(self) -> Option<NodeId> {
        match self {
            TicketRegime::Unmanaged => None,
            TicketRegime::Managed { server } => Some(server),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochState {
    pub epoch: EpochNumber,
    /// Candidate set, sorted ascending.
    pub candidates: Vec<NodeId>,
    pub regime: TicketRegime,
    pub decided: bool,
}

impl EpochState {
    /// Round-robin owner of `sn`: `C[(sn - 1) mod |C|]`.
    pub fn round_robin_owner(&self, sn: SlotNumber) -> NodeId {
        self.candidates[((sn.0 - 1) % self.candidates.len() as u64) as usize]
    }
}

/// Configured ticketing regime of a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegimeSpec {
    /// Round-robin over `candidates` (all nodes when absent).
    Utr {
        #[serde(default)]
        candidates: Option<Vec<NodeId>>,
    },
    /// Single ticketing server granting batches of `batch` slots.
    Mtr {
        #[serde(default)]
        server: NodeId,
        #[serde(default = "default_batch")]
        batch: u64,
    },
    /// Hybrid regime; managed epochs grant batches of `batch` slots.
    Htr {
        #[serde(default = "default_batch")]
        batch: u64,
    },
}

fn default_batch() -> u64 {
    10
}

impl RegimeSpec {
    pub fn label(&self) -> String {
        match self {
            RegimeSpec::Utr { candidates: None } => "UTR(all)".to_string(),
            RegimeSpec::Utr { candidates: Some(c) } => {
                let ids: Vec<String> = c.iter().map(|n| n.to_string()).collect();
                format!("UTR({})", ids.join("+"))
            }
            RegimeSpec::Mtr { batch, .. } => format!("MTR(B={batch})"),
            RegimeSpec::Htr { batch } => format!("HTR(B={batch})"),
        }
    }

    pub fn batch(&self) -> Option<u64> {
        match self {
            RegimeSpec::Utr { .. } => None,
            RegimeSpec::Mtr { batch, .. } | RegimeSpec::Htr { batch } => Some(*batch),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TicketingError {
    #[error("epoch length {epoch_len} is below 2f+1 = {min}")]
    EpochTooShort { epoch_len: u64, min: u64 },
    #[error("concurrency K must be at least 1")]
    ZeroConcurrency,
    #[error("candidate set must not be empty")]
    EmptyCandidates,
    #[error("candidate {0} is not a node")]
    UnknownCandidate(NodeId),
    #[error("epoch {0} reported committed twice")]
    EpochReplayed(EpochNumber),
    #[error("epoch {epoch} outcome has {got} slots, expected {expected}")]
    WrongEpochLength {
        epoch: EpochNumber,
        got: usize,
        expected: u64,
    },
}

/// Static parameters shared by all nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochParams {
    pub n: usize,
    pub f: usize,
    pub epoch_len: u64,
    pub concurrency: u64,
    pub seed: Vec<u8>,
}

impl EpochParams {
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    pub fn all_nodes(&self) -> Vec<NodeId> {
        (0..self.n as u32).map(NodeId).collect()
    }
}

#[derive(Clone, Debug)]
enum Schedule {
    /// Every epoch shares one state.
    Static {
        candidates: Vec<NodeId>,
        regime: TicketRegime,
    },
    Hybrid {
        decided: BTreeMap<EpochNumber, EpochState>,
    },
}

/// Borrowed view of an epoch's decided state.
#[derive(Clone, Copy, Debug)]
pub struct EpochView<'a> {
    pub epoch: EpochNumber,
    pub candidates: &'a [NodeId],
    pub regime: TicketRegime,
}

impl EpochView<'_> {
    pub fn round_robin_owner(&self, sn: SlotNumber) -> NodeId {
        self.candidates[((sn.0 - 1) % self.candidates.len() as u64) as usize]
    }

    pub fn to_state(&self) -> EpochState {
        EpochState {
            epoch: self.epoch,
            candidates: self.candidates.to_vec(),
            regime: self.regime,
            decided: true,
        }
    }
}

/// One node's map of candidate sets and regimes per epoch.
#[derive(Clone, Debug)]
pub struct EpochTable {
    params: EpochParams,
    schedule: Schedule,
    committed: BTreeSet<EpochNumber>,
}

impl EpochTable {
    pub fn new(params: EpochParams, spec: &RegimeSpec) -> Result<Self, TicketingError> {
        match spec {
            RegimeSpec::Htr { .. } => htr_init(params),
            RegimeSpec::Utr { candidates } => {
                let mut c = candidates.clone().unwrap_or_else(|| params.all_nodes());
                validate_candidates(&mut c, params.n)?;
                Ok(Self::fixed(params, c, TicketRegime::Unmanaged))
            }
            RegimeSpec::Mtr { server, .. } => {
                if server.index() >= params.n {
                    return Err(TicketingError::UnknownCandidate(*server));
                }
                let c = params.all_nodes();
                Ok(Self::fixed(params, c, TicketRegime::Managed { server: *server }))
            }
        }
    }

    fn fixed(params: EpochParams, candidates: Vec<NodeId>, regime: TicketRegime) -> Self {
        Self {
            params,
            schedule: Schedule::Static { candidates, regime },
            committed: BTreeSet::new(),
        }
    }

    pub fn params(&self) -> &EpochParams {
        &self.params
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self.schedule, Schedule::Hybrid { .. })
    }

    pub fn lookup(&self, epoch: EpochNumber) -> Option<EpochView<'_>> {
        match &self.schedule {
            Schedule::Static { candidates, regime } => Some(EpochView {
                epoch,
                candidates,
                regime: *regime,
            }),
            Schedule::Hybrid { decided } => decided.get(&epoch).map(|s| EpochView {
                epoch,
                candidates: &s.candidates,
                regime: s.regime,
            }),
        }
    }

    pub fn lookup_slot(&self, sn: SlotNumber) -> Option<EpochView<'_>> {
        self.lookup(epoch_of(sn, self.params.epoch_len))
    }

    pub fn is_decided(&self, epoch: EpochNumber) -> bool {
        self.lookup(epoch).is_some()
    }

    /// Highest decided epoch; `None` means every epoch is decided.
    pub fn max_decided(&self) -> Option<EpochNumber> {
        match &self.schedule {
            Schedule::Static { .. } => None,
            Schedule::Hybrid { decided } => decided.keys().next_back().copied(),
        }
    }

    /// Applies the outcome of committed epoch `i` and, for the hybrid
    /// regime, returns the newly decided state of epoch `i + K`.
    ///
    /// `senders` lists the committed value of each slot in the epoch in
    /// order: `Some(sender)` for a block, `None` for a skipped slot.
    pub fn on_epoch_committed(
        &mut self,
        epoch: EpochNumber,
        senders: &[Option<NodeId>],
    ) -> Result<Option<EpochState>, TicketingError> {
        if senders.len() as u64 != self.params.epoch_len {
            return Err(TicketingError::WrongEpochLength {
                epoch,
                got: senders.len(),
                expected: self.params.epoch_len,
            });
        }
        if !self.committed.insert(epoch) {
            return Err(TicketingError::EpochReplayed(epoch));
        }
        let params = &self.params;
        let Schedule::Hybrid { decided } = &mut self.schedule else {
            return Ok(None);
        };
        let current = decided
            .get(&epoch)
            .expect("a committed epoch was decided before its slots were proposed")
            .clone();
        let next = next_epoch_state(params, &current, senders);
        decided.insert(next.epoch, next.clone());
        Ok(Some(next))
    }
}

fn validate_candidates(c: &mut Vec<NodeId>, n: usize) -> Result<(), TicketingError> {
    if c.is_empty() {
        return Err(TicketingError::EmptyCandidates);
    }
    if let Some(bad) = c.iter().find(|id| id.index() >= n) {
        return Err(TicketingError::UnknownCandidate(*bad));
    }
    c.sort();
    c.dedup();
    Ok(())
}

/// Distinct senders of non-skipped slots in a committed epoch.
pub fn active_senders(senders: &[Option<NodeId>]) -> BTreeSet<NodeId> {
    senders.iter().flatten().copied().collect()
}

/// The switching rule: derives epoch `i + K` from committed epoch `i`.
fn next_epoch_state(params: &EpochParams, current: &EpochState, senders: &[Option<NodeId>]) -> EpochState {
    let active = active_senders(senders);
    let quorum = params.quorum();
    let target = EpochNumber(current.epoch.0 + params.concurrency);

    let candidates = match current.regime {
        TicketRegime::Unmanaged if active.len() < quorum => params.all_nodes(),
        TicketRegime::Unmanaged => active.iter().copied().collect(),
        TicketRegime::Managed { .. } => current.candidates.clone(),
    };

    let skipped = senders.iter().any(Option::is_none);
    let managed = !matches!(current.regime, TicketRegime::Unmanaged);
    let regime = if skipped || (active.len() < quorum && managed) {
        TicketRegime::Unmanaged
    } else {
        TicketRegime::Managed {
            server: get_ticketing_server(target, &candidates, &params.seed),
        }
    };

    EpochState {
        epoch: target,
        candidates,
        regime,
        decided: true,
    }
}

/// Hybrid initialisation: the first `K` epochs round-robin over all nodes.
pub fn htr_init(params: EpochParams) -> Result<EpochTable, TicketingError> {
    let min = params.quorum() as u64;
    if params.epoch_len < min {
        return Err(TicketingError::EpochTooShort {
            epoch_len: params.epoch_len,
            min,
        });
    }
    if params.concurrency == 0 {
        return Err(TicketingError::ZeroConcurrency);
    }
    let all = params.all_nodes();
    let decided = (1..=params.concurrency)
        .map(|i| {
            let e = EpochNumber(i);
            (
                e,
                EpochState {
                    epoch: e,
                    candidates: all.clone(),
                    regime: TicketRegime::Unmanaged,
                    decided: true,
                },
            )
        })
        .collect();
    Ok(EpochTable {
        params,
        schedule: Schedule::Hybrid { decided },
        committed: BTreeSet::new(),
    })
}

/// Deterministic server election: sort the candidates ascending and pick
/// index `H(seed || epoch_be) mod |C|`, where `H` is the first 8 bytes of
/// SHA-256 read big-endian.
pub fn get_ticketing_server(epoch: EpochNumber, candidates: &[NodeId], seed: &[u8]) -> NodeId {
    assert!(!candidates.is_empty(), "candidate set must not be empty");
    let mut sorted = candidates.to_vec();
    sorted.sort();
    let mut h = Sha256::new();
    h.update(seed);
    h.update(epoch.0.to_be_bytes());
    let out = h.finalize();
    let k = u64::from_be_bytes(out[..8].try_into().expect("32-byte digest")) % sorted.len() as u64;
    sorted[k as usize]
}

/// Local eligibility check of proposer `p` for slot `sn`.
pub fn verify_ticket(epochs: &EpochTable, sn: SlotNumber, p: NodeId, proof: &TicketProof) -> Verdict {
    if sn.0 == 0 || proof.slot() != sn {
        return Verdict::Invalid;
    }
    let Some(view) = epochs.lookup_slot(sn) else {
        return Verdict::Undefined;
    };
    let ok = match (view.regime, proof) {
        (TicketRegime::Unmanaged, TicketProof::RoundRobin { .. }) => view.round_robin_owner(sn) == p,
        (
            TicketRegime::Managed { server },
            TicketProof::ServerGrant {
                slot,
                grantee,
                server: claimed,
                auth,
            },
        ) => *grantee == p && *claimed == server && verify_grant_tag(server, *slot, p, *auth),
        _ => false,
    };
    if ok {
        Verdict::Valid
    } else {
        Verdict::Invalid
    }
}

/// How a ticketing server hands out grants.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ServerMode {
    #[default]
    Correct,
    /// Grants nothing.
    Starve,
    /// Grants only to members of the set.
    ColludeOnly(BTreeSet<NodeId>),
    /// Hands every batch to two different requesters.
    DoubleGrant,
}

/// Slots granted to one requester in one reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrantBatch {
    pub grantee: NodeId,
    pub server: NodeId,
    pub batch_size: u64,
    pub tickets: Vec<TicketProof>,
}

impl GrantBatch {
    pub fn slots(&self) -> impl Iterator<Item = SlotNumber> + '_ {
        self.tickets.iter().map(TicketProof::slot)
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }
}

/// Grant bookkeeping of one node acting as ticketing server.
#[derive(Clone, Debug)]
pub struct GrantServer {
    signer: Signer,
    /// Next unassigned offset within each epoch served.
    cursors: BTreeMap<EpochNumber, u64>,
    /// DoubleGrant: the batch to repeat for the next different requester.
    repeat: Option<(NodeId, Vec<SlotNumber>)>,
    issued: BTreeSet<SlotNumber>,
}

impl GrantServer {
    pub fn new(node: NodeId) -> Self {
        Self {
            signer: Signer::new(node),
            cursors: BTreeMap::new(),
            repeat: None,
            issued: BTreeSet::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.signer.node()
    }

    /// Hands out up to `batch` unassigned slots, ascending, from the
    /// epochs at or after `from_epoch` that this node manages.
    ///
    /// A correct server grants only to members of the epoch's candidate set
    /// and skips slots for which `is_open` is false (already finalized or
    /// ejected locally). The result is empty when nothing is available.
    pub fn grant_batch(
        &mut self,
        epochs: &EpochTable,
        requester: NodeId,
        batch: u64,
        from_epoch: EpochNumber,
        mode: &ServerMode,
        is_open: impl Fn(SlotNumber) -> bool,
    ) -> GrantBatch {
        let me = self.node();
        let empty = GrantBatch {
            grantee: requester,
            server: me,
            batch_size: batch,
            tickets: Vec::new(),
        };
        match mode {
            ServerMode::Starve => return empty,
            ServerMode::ColludeOnly(set) if !set.contains(&requester) => return empty,
            ServerMode::DoubleGrant => {
                if let Some((first, slots)) = self.repeat.take() {
                    if first != requester {
                        return self.sign(requester, batch, slots);
                    }
                    self.repeat = Some((first, slots));
                }
            }
            _ => {}
        }

        let epoch_len = epochs.params().epoch_len;
        let mut slots = Vec::new();
        let mut epoch = from_epoch.max(EpochNumber(1));
        // Static schedules are unbounded; stop scanning after a generous horizon.
        let horizon = epochs
            .max_decided()
            .unwrap_or(EpochNumber(epoch.0 + batch.div_ceil(epoch_len) + 1 + from_epoch.0));
        while (slots.len() as u64) < batch && epoch <= horizon {
            if let Some(view) = epochs.lookup(epoch) {
                let serves = view.regime.server() == Some(me);
                let eligible = matches!(mode, ServerMode::Correct | ServerMode::DoubleGrant)
                    .then(|| view.candidates.contains(&requester))
                    .unwrap_or(true);
                if serves && eligible {
                    let range = epoch_slots(epoch, epoch_len);
                    let first = *range.start();
                    let cursor = self.cursors.entry(epoch).or_insert(0);
                    while *cursor < epoch_len && (slots.len() as u64) < batch {
                        let sn = SlotNumber(first + *cursor);
                        *cursor += 1;
                        if is_open(sn) && !self.issued.contains(&sn) {
                            slots.push(sn);
                        }
                    }
                }
            } else {
                break;
            }
            epoch = EpochNumber(epoch.0 + 1);
        }
        if slots.is_empty() {
            return empty;
        }
        self.issued.extend(slots.iter().copied());
        if matches!(mode, ServerMode::DoubleGrant) {
            self.repeat = Some((requester, slots.clone()));
        }
        self.sign(requester, batch, slots)
    }

    fn sign(&self, grantee: NodeId, batch: u64, slots: Vec<SlotNumber>) -> GrantBatch {
        let server = self.node();
        GrantBatch {
            grantee,
            server,
            batch_size: batch,
            tickets: slots
                .into_iter()
                .map(|slot| TicketProof::ServerGrant {
                    slot,
                    grantee,
                    server,
                    auth: self.signer.sign_grant(slot, grantee),
                })
                .collect(),
        }
    }
}

/// May the node ask for its next batch? Only once every slot of the most
/// recent batch is finalized (with a block or skipped).
pub fn mtr_request_gate(log: &LogView, last_batch: Option<&[SlotNumber]>) -> bool {
    match last_batch {
        None => true,
        Some(slots) => slots.iter().all(|sn| log.is_finalized(*sn)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::SlotValue;

    fn params(n: usize, l: u64, k: u64) -> EpochParams {
        EpochParams {
            n,
            f: crate::types::max_faults(n),
            epoch_len: l,
            concurrency: k,
            seed: vec![0x2a],
        }
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn some(v: &[u32]) -> Vec<Option<NodeId>> {
        v.iter().map(|x| Some(NodeId(*x))).collect()
    }

    #[test]
    fn htr_init_round_robins_first_k_epochs() {
        let t = htr_init(params(4, 4, 2)).unwrap();
        for e in 1..=2 {
            let v = t.lookup(EpochNumber(e)).unwrap();
            assert_eq!(v.candidates, ids(&[0, 1, 2, 3]).as_slice());
            assert_eq!(v.regime, TicketRegime::Unmanaged);
        }
        assert!(t.lookup(EpochNumber(3)).is_none());
    }

    #[test]
    fn htr_init_rejects_short_epochs() {
        let mut p = params(4, 2, 2);
        p.f = 1;
        assert_eq!(
            htr_init(p).unwrap_err(),
            TicketingError::EpochTooShort { epoch_len: 2, min: 3 }
        );
        assert_eq!(htr_init(params(4, 4, 0)).unwrap_err(), TicketingError::ZeroConcurrency);
    }

    #[test]
    fn round_robin_ticket_check() {
        let t = htr_init(params(4, 4, 2)).unwrap();
        let rr = TicketProof::RoundRobin { slot: SlotNumber(1) };
        assert_eq!(verify_ticket(&t, SlotNumber(1), NodeId(0), &rr), Verdict::Valid);
        assert_eq!(verify_ticket(&t, SlotNumber(1), NodeId(1), &rr), Verdict::Invalid);
        // mismatched slot in proof
        assert_eq!(verify_ticket(&t, SlotNumber(2), NodeId(1), &rr), Verdict::Invalid);
    }

    #[test]
    fn undecided_epoch_is_undefined() {
        let t = htr_init(params(4, 4, 2)).unwrap();
        let rr = TicketProof::RoundRobin { slot: SlotNumber(9) };
        for p in 0..4 {
            assert_eq!(verify_ticket(&t, SlotNumber(9), NodeId(p), &rr), Verdict::Undefined);
        }
    }

    #[test]
    fn grant_from_wrong_server_is_invalid() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        let next = t
            .on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3]))
            .unwrap()
            .unwrap();
        let server = next.regime.server().unwrap();
        let forger = NodeId((server.0 + 1) % 4);
        let sn = SlotNumber(9);
        let good = TicketProof::ServerGrant {
            slot: sn,
            grantee: NodeId(2),
            server,
            auth: Signer::new(server).sign_grant(sn, NodeId(2)),
        };
        assert_eq!(verify_ticket(&t, sn, NodeId(2), &good), Verdict::Valid);
        assert_eq!(verify_ticket(&t, sn, NodeId(1), &good), Verdict::Invalid);
        let forged = TicketProof::ServerGrant {
            slot: sn,
            grantee: NodeId(2),
            server,
            auth: Signer::new(forger).sign_grant(sn, NodeId(2)),
        };
        assert_eq!(verify_ticket(&t, sn, NodeId(2), &forged), Verdict::Invalid);
        let self_claimed = TicketProof::ServerGrant {
            slot: sn,
            grantee: NodeId(2),
            server: forger,
            auth: Signer::new(forger).sign_grant(sn, NodeId(2)),
        };
        assert_eq!(verify_ticket(&t, sn, NodeId(2), &self_claimed), Verdict::Invalid);
        let rr = TicketProof::RoundRobin { slot: sn };
        assert_eq!(verify_ticket(&t, sn, NodeId(0), &rr), Verdict::Invalid);
    }

    #[test]
    fn singleton_candidate_is_always_server() {
        for e in 1..50 {
            assert_eq!(get_ticketing_server(EpochNumber(e), &ids(&[5]), b"anything"), NodeId(5));
        }
    }

    #[test]
    fn election_ignores_candidate_order() {
        let a = get_ticketing_server(EpochNumber(7), &ids(&[3, 1, 0, 2]), b"s");
        let b = get_ticketing_server(EpochNumber(7), &ids(&[0, 1, 2, 3]), b"s");
        assert_eq!(a, b);
    }

    #[test]
    fn election_matches_reference_hash() {
        // Reference recipe computed independently:
        // python3 -c "import hashlib;d=hashlib.sha256(bytes([0x2a])+(3).to_bytes(8,'big')).digest();print(int.from_bytes(d[:8],'big')%4)"
        // -> 3
        let got = get_ticketing_server(EpochNumber(3), &ids(&[0, 1, 2, 3]), &[0x2a]);
        assert_eq!(got, NodeId(3));
    }

    #[test]
    fn clean_unmanaged_epoch_elects_server() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        let s = t
            .on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3]))
            .unwrap()
            .unwrap();
        assert_eq!(s.epoch, EpochNumber(3));
        assert_eq!(s.candidates, ids(&[0, 1, 2, 3]));
        assert_eq!(s.regime, TicketRegime::Managed { server: NodeId(3) });
    }

    #[test]
    fn skip_in_unmanaged_epoch_shrinks_candidates() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        let outcome = vec![None, Some(NodeId(1)), Some(NodeId(2)), Some(NodeId(3))];
        let s = t.on_epoch_committed(EpochNumber(2), &outcome).unwrap().unwrap();
        assert_eq!(s.epoch, EpochNumber(4));
        assert_eq!(s.candidates, ids(&[1, 2, 3]));
        assert_eq!(s.regime, TicketRegime::Unmanaged);
    }

    #[test]
    fn all_skipped_managed_epoch_keeps_candidates() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        t.on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3])).unwrap();
        let s = t.on_epoch_committed(EpochNumber(3), &[None; 4]).unwrap().unwrap();
        assert_eq!(s.epoch, EpochNumber(5));
        assert_eq!(s.candidates, ids(&[0, 1, 2, 3]));
        assert_eq!(s.regime, TicketRegime::Unmanaged);
    }

    #[test]
    fn too_few_senders_resets_candidates() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        t.on_epoch_committed(
            EpochNumber(2),
            &[None, Some(NodeId(1)), Some(NodeId(2)), Some(NodeId(3))],
        )
        .unwrap();
        let s = t
            .on_epoch_committed(
                EpochNumber(4),
                &[Some(NodeId(1)), Some(NodeId(2)), None, Some(NodeId(1))],
            )
            .unwrap()
            .unwrap();
        assert_eq!(s.epoch, EpochNumber(6));
        assert_eq!(s.candidates, ids(&[0, 1, 2, 3]));
        assert_eq!(s.regime, TicketRegime::Unmanaged);
    }

    #[test]
    fn managed_epoch_with_few_senders_reverts() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        t.on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3])).unwrap();
        let s = t
            .on_epoch_committed(EpochNumber(3), &some(&[2, 2, 2, 2]))
            .unwrap()
            .unwrap();
        assert_eq!(s.regime, TicketRegime::Unmanaged);
        assert_eq!(s.candidates, ids(&[0, 1, 2, 3]));
    }

    #[test]
    fn replayed_epoch_is_an_error() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        t.on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3])).unwrap();
        assert_eq!(
            t.on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3])).unwrap_err(),
            TicketingError::EpochReplayed(EpochNumber(1))
        );
        assert!(matches!(
            t.on_epoch_committed(EpochNumber(2), &some(&[0])).unwrap_err(),
            TicketingError::WrongEpochLength { .. }
        ));
    }

    /// With |C| >= 2f+1 and L >= |C|, an unmanaged epoch without skips
    /// always has at least 2f+1 active senders, so the two readings of the
    /// switching condition coincide. Exhaustive over n = 4, L = 4..6.
    #[test]
    fn unmanaged_no_skip_implies_quorum_of_senders() {
        for l in 4u64..=6 {
            for mask in 1u32..16 {
                let c: Vec<NodeId> = (0..4).filter(|i| mask & (1 << i) != 0).map(NodeId).collect();
                if c.len() < 3 {
                    continue;
                }
                for epoch in 1..=4u64 {
                    let view = EpochState {
                        epoch: EpochNumber(epoch),
                        candidates: c.clone(),
                        regime: TicketRegime::Unmanaged,
                        decided: true,
                    };
                    let senders: Vec<_> = epoch_slots(EpochNumber(epoch), l)
                        .map(|sn| Some(view.round_robin_owner(SlotNumber(sn))))
                        .collect();
                    assert!(active_senders(&senders).len() >= 3);
                }
            }
        }
    }

    #[test]
    fn cursor_hands_out_consecutive_batches() {
        let p = EpochParams {
            n: 4,
            f: 1,
            epoch_len: 50,
            concurrency: 2,
            seed: vec![1],
        };
        let t = EpochTable::new(
            p,
            &RegimeSpec::Mtr {
                server: NodeId(0),
                batch: 10,
            },
        )
        .unwrap();
        let mut srv = GrantServer::new(NodeId(0));
        let mut got = Vec::new();
        for r in [1, 2, 1] {
            let b = srv.grant_batch(&t, NodeId(r), 10, EpochNumber(1), &ServerMode::Correct, |_| true);
            got.push(b.slots().map(|s| s.0).collect::<Vec<_>>());
        }
        assert_eq!(got[0], (1..=10).collect::<Vec<_>>());
        assert_eq!(got[1], (11..=20).collect::<Vec<_>>());
        assert_eq!(got[2], (21..=30).collect::<Vec<_>>());
    }

    #[test]
    fn batches_span_epochs_and_skip_closed_slots() {
        let p = EpochParams {
            n: 4,
            f: 1,
            epoch_len: 4,
            concurrency: 2,
            seed: vec![1],
        };
        let t = EpochTable::new(
            p,
            &RegimeSpec::Mtr {
                server: NodeId(0),
                batch: 3,
            },
        )
        .unwrap();
        let mut srv = GrantServer::new(NodeId(0));
        let b = srv.grant_batch(&t, NodeId(1), 6, EpochNumber(1), &ServerMode::Correct, |sn| sn.0 != 2);
        assert_eq!(b.slots().map(|s| s.0).collect::<Vec<_>>(), vec![1, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn byzantine_modes() {
        let p = EpochParams {
            n: 4,
            f: 1,
            epoch_len: 50,
            concurrency: 2,
            seed: vec![1],
        };
        let t = EpochTable::new(
            p,
            &RegimeSpec::Mtr {
                server: NodeId(3),
                batch: 5,
            },
        )
        .unwrap();
        let mut srv = GrantServer::new(NodeId(3));
        assert!(srv
            .grant_batch(&t, NodeId(0), 5, EpochNumber(1), &ServerMode::Starve, |_| true)
            .is_empty());
        let only3 = ServerMode::ColludeOnly([NodeId(3)].into());
        assert!(srv
            .grant_batch(&t, NodeId(0), 5, EpochNumber(1), &only3, |_| true)
            .is_empty());
        assert_eq!(
            srv.grant_batch(&t, NodeId(3), 5, EpochNumber(1), &only3, |_| true)
                .tickets
                .len(),
            5
        );

        let mut dbl = GrantServer::new(NodeId(3));
        let a = dbl.grant_batch(&t, NodeId(0), 5, EpochNumber(1), &ServerMode::DoubleGrant, |_| true);
        let b = dbl.grant_batch(&t, NodeId(1), 5, EpochNumber(1), &ServerMode::DoubleGrant, |_| true);
        assert_eq!(a.slots().collect::<Vec<_>>(), b.slots().collect::<Vec<_>>());
        assert_ne!(a.grantee, b.grantee);
        let c = dbl.grant_batch(&t, NodeId(2), 5, EpochNumber(1), &ServerMode::DoubleGrant, |_| true);
        assert_eq!(c.slots().next(), Some(SlotNumber(6)));
    }

    #[test]
    fn correct_server_grants_only_candidates_of_hybrid_epochs() {
        let mut t = htr_init(params(4, 4, 2)).unwrap();
        t.on_epoch_committed(
            EpochNumber(2),
            &[None, Some(NodeId(1)), Some(NodeId(2)), Some(NodeId(3))],
        )
        .unwrap();
        t.on_epoch_committed(EpochNumber(1), &some(&[0, 1, 2, 3])).unwrap();
        let server = t.lookup(EpochNumber(3)).unwrap().regime.server().unwrap();
        let mut srv = GrantServer::new(server);
        let b = srv.grant_batch(&t, NodeId(0), 10, EpochNumber(1), &ServerMode::Correct, |_| true);
        assert_eq!(b.slots().map(|s| s.0).collect::<Vec<_>>(), vec![9, 10, 11, 12]);
        // exhausted
        assert!(srv
            .grant_batch(&t, NodeId(1), 10, EpochNumber(1), &ServerMode::Correct, |_| true)
            .is_empty());
    }

    #[test]
    fn request_gate_waits_for_finality() {
        let mut log = LogView::new();
        let batch: Vec<SlotNumber> = (11..=20).map(SlotNumber).collect();
        assert!(mtr_request_gate(&log, None));
        for sn in 11..=19 {
            log.finalize(SlotNumber(sn), SlotValue::Bottom).unwrap();
        }
        assert!(!mtr_request_gate(&log, Some(&batch)));
        log.finalize(SlotNumber(20), SlotValue::Bottom).unwrap();
        assert!(mtr_request_gate(&log, Some(&batch)));
    }
}
