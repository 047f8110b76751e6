//! Property checks over complete traces.
//!
//! The oracle only reads trace events and a few scenario facts (fault
//! budget, epoch geometry, who is Byzantine). It does not call into the
//! ticketing or simulation code, so a bug there cannot hide itself here.
//! Failing verdicts carry a witness: a subsequence of the trace that fails
//! the same check on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::log::ValueId;
use crate::ticketing::{RegimeSpec, TicketRegime, Verdict};
use crate::trace::{EventKind, Trace, TraceEvent};
use crate::types::{epoch_of, Micros, NodeId, SlotNumber};

/// Static regime of every epoch, when the regime is not hybrid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StaticRegime {
    Hybrid,
    Fixed(TicketRegime),
}

#[derive(Clone, Debug)]
pub struct OracleContext {
    pub n: usize,
    pub f: usize,
    pub concurrency: u64,
    pub epoch_len: u64,
    pub gst: Micros,
    /// End of the workload. Proposals stop here and open slots drain to ⊥.
    pub horizon: Micros,
    pub byzantine: BTreeSet<NodeId>,
    pub regime: StaticRegime,
    /// More than `f` distinct nodes misbehave somewhere in the run, so the
    /// run-wide skip bound has no premise.
    pub over_threshold: bool,
}

impl OracleContext {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            n: cfg.n,
            f: cfg.faults_threshold(),
            concurrency: cfg.concurrency,
            epoch_len: cfg.epoch_len,
            gst: cfg.gst_ms.us(),
            horizon: cfg.duration_ms.us(),
            byzantine: cfg.byzantine_nodes(),
            over_threshold: cfg.faulty_nodes().len() > cfg.faults_threshold(),
            regime: match &cfg.regime {
                RegimeSpec::Htr { .. } => StaticRegime::Hybrid,
                RegimeSpec::Utr { .. } => StaticRegime::Fixed(TicketRegime::Unmanaged),
                RegimeSpec::Mtr { server, .. } => StaticRegime::Fixed(TicketRegime::Managed { server: *server }),
            },
        }
    }

    fn correct(&self, node: NodeId) -> bool {
        !self.byzantine.contains(&node)
    }

    fn epoch(&self, sn: SlotNumber) -> u64 {
        epoch_of(sn, self.epoch_len).0
    }

    /// `K (fL + 2(f+1) L / n)`.
    pub fn skip_bound(&self) -> f64 {
        let (f, l, n, k) = (
            self.f as f64,
            self.epoch_len as f64,
            self.n as f64,
            self.concurrency as f64,
        );
        k * (f * l + 2.0 * (f + 1.0) * l / n)
    }

    /// `(f+1) K` correct-sender blocks per window of `2K` epochs.
    pub fn chain_quality_bound(&self) -> u64 {
        (self.f as u64 + 1) * self.concurrency
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyVerdict {
    pub property: &'static str,
    pub status: Status,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<String>,
}

impl PropertyVerdict {
    fn pass(property: &'static str, detail: impl Into<String>) -> Self {
        Self {
            property,
            status: Status::Pass,
            detail: detail.into(),
            bound: None,
            measured: None,
            witness: Vec::new(),
        }
    }

    fn fail(property: &'static str, detail: impl Into<String>, witness: &[&TraceEvent]) -> Self {
        Self {
            property,
            status: Status::Fail,
            detail: detail.into(),
            bound: None,
            measured: None,
            witness: witness.iter().map(|e| line(e)).collect(),
        }
    }

    fn not_applicable(property: &'static str, detail: impl Into<String>) -> Self {
        Self {
            property,
            status: Status::NotApplicable,
            detail: detail.into(),
            bound: None,
            measured: None,
            witness: Vec::new(),
        }
    }

    fn with_numbers(mut self, bound: f64, measured: f64) -> Self {
        self.bound = Some(bound);
        self.measured = Some(measured);
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// The witness lines parsed back into a trace.
    pub fn witness_trace(&self) -> Trace {
        let mut text = String::from(crate::trace::TRACE_HEADER);
        text.push('\n');
        for l in &self.witness {
            text.push_str(l);
            text.push('\n');
        }
        Trace::parse(&text).expect("witness lines come from a trace")
    }
}

impl fmt::Display for PropertyVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A ",
        };
        write!(f, "{status} {:<20} {}", self.property, self.detail)?;
        for w in self.witness.iter().take(8) {
            write!(f, "\n       | {w}")?;
        }
        if self.witness.len() > 8 {
            write!(f, "\n       | ... {} more", self.witness.len() - 8)?;
        }
        Ok(())
    }
}

fn line(ev: &TraceEvent) -> String {
    let t = Trace {
        events: vec![ev.clone()],
    };
    t.to_text().lines().nth(1).unwrap_or_default().to_string()
}

/// No two correct nodes commit different values for a slot, and no node
/// finalizes a slot twice with different values.
pub fn check_consistency(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "consistency";
    let mut committed: BTreeMap<SlotNumber, (&TraceEvent, ValueId)> = BTreeMap::new();
    let mut finalized: BTreeMap<(NodeId, SlotNumber), (&TraceEvent, ValueId)> = BTreeMap::new();
    for ev in trace.iter() {
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        if !ctx.correct(node) {
            continue;
        }
        match &ev.kind {
            EventKind::Finalize { value, .. } | EventKind::LogCommit { value } => {
                if let Some((prev, v)) = finalized.get(&(node, slot)) {
                    if v != value {
                        return PropertyVerdict::fail(P, format!("node {node} changed slot {slot}"), &[prev, ev]);
                    }
                } else {
                    finalized.insert((node, slot), (ev, *value));
                }
                if matches!(ev.kind, EventKind::LogCommit { .. }) {
                    match committed.get(&slot) {
                        Some((prev, v)) if v != value => {
                            return PropertyVerdict::fail(
                                P,
                                format!("slot {slot} committed twice differently"),
                                &[prev, ev],
                            );
                        }
                        Some(_) => {}
                        None => {
                            committed.insert(slot, (ev, *value));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    PropertyVerdict::pass(P, format!("{} slots agree", committed.len()))
}

/// Every epoch is decided identically by every correct node that decides it.
pub fn check_epoch_consistency(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "epoch_consistency";
    let mut seen: BTreeMap<u64, (&TraceEvent, i64, &Vec<NodeId>)> = BTreeMap::new();
    let mut per_node: BTreeMap<(NodeId, u64), &TraceEvent> = BTreeMap::new();
    for ev in trace.iter() {
        let EventKind::EpochDecided {
            epoch,
            regime,
            candidates,
        } = &ev.kind
        else {
            continue;
        };
        let Some(node) = ev.node.filter(|n| ctx.correct(*n)) else {
            continue;
        };
        if let Some(prev) = per_node.insert((node, epoch.0), ev) {
            return PropertyVerdict::fail(P, format!("node {node} decided epoch {epoch} twice"), &[prev, ev]);
        }
        let tr = regime.as_tr();
        match seen.get(&epoch.0) {
            Some((prev, ptr, pc)) if *ptr != tr || *pc != candidates => {
                return PropertyVerdict::fail(P, format!("epoch {epoch} decided differently"), &[prev, ev]);
            }
            Some(_) => {}
            None => {
                seen.insert(epoch.0, (ev, tr, candidates));
            }
        }
    }
    PropertyVerdict::pass(P, format!("{} epochs agree", seen.len()))
}

/// Start of each epoch: the earliest timer started by a correct node for
/// one of its slots.
fn epoch_starts<'a>(trace: &'a Trace, ctx: &OracleContext) -> BTreeMap<u64, &'a TraceEvent> {
    let mut starts: BTreeMap<u64, &TraceEvent> = BTreeMap::new();
    for ev in trace.iter() {
        if let (EventKind::TimerStart { .. }, Some(node), Some(slot)) = (&ev.kind, ev.node, ev.slot) {
            if ctx.correct(node) {
                starts.entry(ctx.epoch(slot)).or_insert(ev);
            }
        }
    }
    starts
}

/// First commit of every slot at a correct node.
fn commits<'a>(trace: &'a Trace, ctx: &OracleContext) -> BTreeMap<SlotNumber, (&'a TraceEvent, ValueId)> {
    let mut out = BTreeMap::new();
    for ev in trace.iter() {
        if let (EventKind::LogCommit { value }, Some(node), Some(slot)) = (&ev.kind, ev.node, ev.slot) {
            if ctx.correct(node) {
                out.entry(slot).or_insert((ev, *value));
            }
        }
    }
    out
}

/// Skipped slots in epochs starting after GST stay within
/// `K (fL + 2(f+1) L/n)`.
pub fn check_slot_utilization(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    if ctx.over_threshold {
        return PropertyVerdict::not_applicable("slot_utilization", "more than f faulty nodes over the run");
    }
    check_slot_utilization_between(trace, ctx, ctx.gst, Micros::MAX)
}

/// Slot utilization restricted to epochs whose start lies in `[from, to)`
/// (and after GST). Epochs not fully committed by the horizon are left out.
pub fn check_slot_utilization_between(trace: &Trace, ctx: &OracleContext, from: Micros, to: Micros) -> PropertyVerdict {
    const P: &str = "slot_utilization";
    if !ctx.byzantine.is_empty() {
        return PropertyVerdict::not_applicable(P, "schedule has Byzantine nodes");
    }
    if ctx.regime != StaticRegime::Hybrid {
        return PropertyVerdict::not_applicable(P, "bound holds for the hybrid regime only");
    }
    let from = from.max(ctx.gst);
    let starts = epoch_starts(trace, ctx);
    let commits = commits(trace, ctx);
    let mut settled: BTreeMap<u64, u64> = BTreeMap::new();
    for (slot, (ev, _)) in &commits {
        if ev.at <= ctx.horizon {
            *settled.entry(ctx.epoch(*slot)).or_default() += 1;
        }
    }
    let in_scope =
        |e: u64| starts.get(&e).is_some_and(|s| s.at >= from && s.at < to) && settled.get(&e) == Some(&ctx.epoch_len);
    let mut witness: Vec<&TraceEvent> = Vec::new();
    let mut scoped_epochs = BTreeSet::new();
    let mut skipped = 0u64;
    for (slot, (ev, value)) in commits {
        let e = ctx.epoch(slot);
        if value.is_bottom() && in_scope(e) {
            skipped += 1;
            if scoped_epochs.insert(e) {
                witness.push(starts[&e]);
            }
            witness.push(ev);
        }
    }
    let bound = ctx.skip_bound();
    let detail = format!("{skipped} skipped post-GST slots, bound {bound:.1}");
    if skipped as f64 <= bound {
        PropertyVerdict::pass(P, detail).with_numbers(bound, skipped as f64)
    } else {
        witness.sort_by_key(|e| e.at);
        PropertyVerdict::fail(P, detail, &witness).with_numbers(bound, skipped as f64)
    }
}

/// Every aligned window of `2K` epochs that starts after GST and is fully
/// committed holds at least `(f+1) K` blocks from correct senders.
pub fn check_chain_quality(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "chain_quality";
    let starts = epoch_starts(trace, ctx);
    let commits = commits(trace, ctx);
    let span = 2 * ctx.concurrency;
    let bound = ctx.chain_quality_bound();
    let mut windows = 0u64;
    let mut worst: Option<u64> = None;
    let last_epoch = commits.keys().next_back().map_or(0, |s| ctx.epoch(*s));
    let mut w = 0u64;
    loop {
        let first = w * span + 1;
        let last = first + span - 1;
        if last > last_epoch {
            break;
        }
        w += 1;
        let Some(start) = starts.get(&first) else {
            continue;
        };
        if start.at < ctx.gst {
            continue;
        }
        let lo = SlotNumber((first - 1) * ctx.epoch_len + 1);
        let hi = SlotNumber(last * ctx.epoch_len);
        let window: Vec<_> = commits.range(lo..=hi).collect();
        if window.len() as u64 != hi.0 - lo.0 + 1 {
            continue;
        }
        windows += 1;
        let good = window
            .iter()
            .filter(|(_, (_, v))| v.sender().is_some_and(|s| ctx.correct(s)))
            .count() as u64;
        worst = Some(worst.map_or(good, |x| x.min(good)));
        if good < bound {
            let mut witness: Vec<&TraceEvent> = vec![start];
            witness.extend(window.iter().map(|(_, (e, _))| *e));
            return PropertyVerdict::fail(
                P,
                format!("epochs {first}..={last}: {good} correct-sender blocks, need {bound}"),
                &witness,
            )
            .with_numbers(bound as f64, good as f64);
        }
    }
    let detail = match worst {
        Some(m) => format!("{windows} windows, minimum {m} correct-sender blocks, bound {bound}"),
        None => "no complete post-GST window".to_string(),
    };
    PropertyVerdict::pass(P, detail).with_numbers(bound as f64, worst.unwrap_or(0) as f64)
}

/// Epoch regimes as decided by correct nodes.
fn regimes(trace: &Trace, ctx: &OracleContext) -> BTreeMap<u64, TicketRegime> {
    let mut out = BTreeMap::new();
    for ev in trace.iter() {
        if let EventKind::EpochDecided { epoch, regime, .. } = &ev.kind {
            if ev.node.is_some_and(|n| ctx.correct(n)) {
                out.entry(epoch.0).or_insert(*regime);
            }
        }
    }
    out
}

/// In unmanaged epochs and epochs managed by a correct server, no slot is
/// granted to, or validly proposed by, two different nodes.
pub fn check_contention_free(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "contention_free";
    let decided = regimes(trace, ctx);
    let in_scope = |slot: SlotNumber| {
        let regime = match &ctx.regime {
            StaticRegime::Fixed(r) => Some(*r),
            StaticRegime::Hybrid => decided.get(&ctx.epoch(slot)).copied(),
        };
        match regime {
            Some(TicketRegime::Managed { server }) => ctx.correct(server),
            _ => true,
        }
    };
    let mut holders: BTreeMap<SlotNumber, (&TraceEvent, NodeId)> = BTreeMap::new();
    let mut checked = 0u64;
    for ev in trace.iter() {
        let Some(node) = ev.node.filter(|n| ctx.correct(*n)) else {
            continue;
        };
        let found: Vec<(SlotNumber, NodeId)> = match &ev.kind {
            EventKind::TicketCheck {
                proposer,
                verdict: Verdict::Valid,
                ..
            } => ev.slot.map(|s| (s, *proposer)).into_iter().collect(),
            EventKind::Grant { grantee, slots } if ctx.correct(node) => slots.iter().map(|s| (*s, *grantee)).collect(),
            _ => Vec::new(),
        };
        for (slot, holder) in found {
            if !in_scope(slot) {
                continue;
            }
            checked += 1;
            match holders.get(&slot) {
                Some((prev, h)) if *h != holder => {
                    return PropertyVerdict::fail(P, format!("slot {slot} held by {h} and {holder}"), &[prev, ev]);
                }
                Some(_) => {}
                None => {
                    holders.insert(slot, (ev, holder));
                }
            }
        }
    }
    PropertyVerdict::pass(
        P,
        format!("{} slots with a unique holder ({checked} checks)", holders.len()),
    )
}

/// A ticket judged Valid by one correct node is not judged Invalid by
/// another.
pub fn check_verdict_agreement(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "verdict_agreement";
    let mut seen: BTreeMap<(SlotNumber, NodeId, &str), (&TraceEvent, Verdict)> = BTreeMap::new();
    for ev in trace.iter() {
        let EventKind::TicketCheck {
            proposer,
            proof,
            verdict,
        } = &ev.kind
        else {
            continue;
        };
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        if !ctx.correct(node) || *verdict == Verdict::Undefined {
            continue;
        }
        let key = (slot, *proposer, proof.as_str());
        match seen.get(&key) {
            Some((prev, v)) if v != verdict => {
                return PropertyVerdict::fail(P, format!("slot {slot}: {v} and {verdict}"), &[prev, ev]);
            }
            Some(_) => {}
            None => {
                seen.insert(key, (ev, *verdict));
            }
        }
    }
    PropertyVerdict::pass(P, format!("{} tickets judged consistently", seen.len()))
}

/// Every slot up to the highest timer-started slot is finalized at every
/// correct node that did not crash.
pub fn check_liveness(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "liveness";
    let crashed: BTreeSet<NodeId> = trace
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Crash))
        .filter_map(|e| e.node)
        .collect();
    let mut top: Option<&TraceEvent> = None;
    let mut finalized: BTreeMap<NodeId, BTreeSet<SlotNumber>> = BTreeMap::new();
    for ev in trace.iter() {
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        if !ctx.correct(node) {
            continue;
        }
        match ev.kind {
            EventKind::TimerStart { .. } => {
                if top.is_none_or(|t| slot > t.slot.expect("timer events carry a slot")) {
                    top = Some(ev);
                }
            }
            EventKind::Finalize { .. } => {
                finalized.entry(node).or_default().insert(slot);
            }
            _ => {}
        }
    }
    let Some(top) = top else {
        return PropertyVerdict::pass(P, "no slot was started");
    };
    let h = top.slot.expect("timer events carry a slot");
    let empty = BTreeSet::new();
    for i in 0..ctx.n {
        let node = NodeId(i as u32);
        if !ctx.correct(node) || crashed.contains(&node) {
            continue;
        }
        let done = finalized.get(&node).unwrap_or(&empty);
        if let Some(missing) = (1..=h.0).map(SlotNumber).find(|s| !done.contains(s)) {
            return PropertyVerdict::fail(
                P,
                format!("node {node} never finalized slot {missing} (highest started {h})"),
                &[top],
            );
        }
    }
    PropertyVerdict::pass(P, format!("all slots up to {h} finalized"))
}

/// A node commits slot `sn` only once it has finalized every slot up to
/// `sn`, and commits slots in increasing order.
pub fn check_commit_order(trace: &Trace, ctx: &OracleContext) -> PropertyVerdict {
    const P: &str = "commit_order";
    let mut finalized: BTreeMap<NodeId, BTreeMap<SlotNumber, &TraceEvent>> = BTreeMap::new();
    let mut last_commit: BTreeMap<NodeId, &TraceEvent> = BTreeMap::new();
    let mut commits = 0u64;
    for ev in trace.iter() {
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        if !ctx.correct(node) {
            continue;
        }
        match ev.kind {
            EventKind::Finalize { .. } => {
                finalized.entry(node).or_default().entry(slot).or_insert(ev);
            }
            EventKind::LogCommit { .. } => {
                commits += 1;
                let expected = last_commit.get(&node).and_then(|e| e.slot).map_or(1, |s| s.0 + 1);
                if slot.0 != expected {
                    let mut w: Vec<&TraceEvent> = last_commit.get(&node).into_iter().copied().collect();
                    w.push(ev);
                    return PropertyVerdict::fail(
                        P,
                        format!("node {node} committed slot {slot}, expected {expected}"),
                        &w,
                    );
                }
                if !finalized.get(&node).is_some_and(|m| m.contains_key(&slot)) {
                    return PropertyVerdict::fail(P, format!("node {node} committed unfinalized slot {slot}"), &[ev]);
                }
                last_commit.insert(node, ev);
            }
            _ => {}
        }
    }
    PropertyVerdict::pass(P, format!("{commits} commits in slot order"))
}

/// Slot `later` finalized at `node` while `hole < later` was still open
/// there; `later` committed only after `hole` finalized.
#[derive(Clone, Debug, PartialEq)]
pub struct OutOfOrderWitness {
    pub node: NodeId,
    pub hole: SlotNumber,
    pub later: SlotNumber,
    /// FINALIZE of `later`, FINALIZE of `hole`, LOG_COMMIT of `later`.
    pub lines: Vec<String>,
}

/// First out-of-order finalization in the trace, if any.
pub fn find_out_of_order(trace: &Trace) -> Option<OutOfOrderWitness> {
    let mut finalized: BTreeMap<NodeId, BTreeMap<SlotNumber, &TraceEvent>> = BTreeMap::new();
    let mut commits: BTreeMap<(NodeId, SlotNumber), &TraceEvent> = BTreeMap::new();
    let mut early: Vec<(NodeId, SlotNumber, SlotNumber, &TraceEvent)> = Vec::new();
    for ev in trace.iter() {
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        match ev.kind {
            EventKind::Finalize { .. } => {
                let done = finalized.entry(node).or_default();
                if let Some(hole) = (1..slot.0).map(SlotNumber).find(|s| !done.contains_key(s)) {
                    early.push((node, hole, slot, ev));
                }
                done.entry(slot).or_insert(ev);
            }
            EventKind::LogCommit { .. } => {
                commits.entry((node, slot)).or_insert(ev);
            }
            _ => {}
        }
    }
    early.into_iter().find_map(|(node, hole, later, fin_later)| {
        let fin_hole = finalized.get(&node)?.get(&hole)?;
        let commit = commits.get(&(node, later))?;
        (commit.at >= fin_hole.at).then(|| OutOfOrderWitness {
            node,
            hole,
            later,
            lines: [fin_later, *fin_hole, *commit].iter().map(|e| line(e)).collect(),
        })
    })
}

/// Every applicable check.
pub fn check_all(trace: &Trace, ctx: &OracleContext) -> Vec<PropertyVerdict> {
    vec![
        check_consistency(trace, ctx),
        check_commit_order(trace, ctx),
        check_epoch_consistency(trace, ctx),
        check_verdict_agreement(trace, ctx),
        check_contention_free(trace, ctx),
        check_liveness(trace, ctx),
        check_slot_utilization(trace, ctx),
        check_chain_quality(trace, ctx),
    ]
}
