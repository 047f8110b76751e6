//! Per-phase metrics computed from a trace.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::log::ValueId;
use crate::trace::{EventKind, Trace};
use crate::types::{us_to_ms, Micros, NodeId, SlotNumber};

/// Bumped whenever the CSV columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Scenario facts the metrics need beyond the trace itself.
#[derive(Clone, Debug)]
pub struct MetricsContext {
    pub scenario: String,
    pub regime: String,
    pub n: usize,
    pub duration: Micros,
    pub gst: Micros,
    pub byzantine: BTreeSet<NodeId>,
}

impl MetricsContext {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            scenario: cfg.name.clone(),
            regime: cfg.regime.label(),
            n: cfg.n,
            duration: cfg.duration_ms.us(),
            gst: cfg.gst_ms.us(),
            byzantine: cfg.byzantine_nodes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMetrics {
    pub scenario: String,
    pub phase: usize,
    pub regime: String,
    pub start_ms: f64,
    pub end_ms: f64,
    /// Mean time from proposal intent to finalization at the proposer.
    pub finality_ms: Option<f64>,
    /// Mean time from proposal intent to commit at the proposer.
    pub commit_ms: Option<f64>,
    pub throughput_bps: f64,
    pub committed: u64,
    pub skipped: u64,
    pub proposed_by: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub phases: Vec<PhaseMetrics>,
}

struct Proposal {
    node: NodeId,
    since: Micros,
    finalized: Option<Micros>,
    committed: Option<Micros>,
}

fn phase_of(starts: &[Micros], at: Micros) -> usize {
    starts.partition_point(|s| *s <= at).saturating_sub(1)
}

/// Slices a run into its reporting phases. Proposals count towards the
/// phase of their intent time, committed slots towards the phase of their
/// first commit at a non-Byzantine node.
pub fn collect_metrics(trace: &Trace, ctx: &MetricsContext) -> MetricsRecord {
    let mut starts: Vec<Micros> = trace
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Phase { .. }))
        .map(|e| e.at)
        .collect();
    if starts.is_empty() {
        starts.push(0);
    }
    let mut proposals: BTreeMap<(SlotNumber, ValueId), Proposal> = BTreeMap::new();
    let mut first_commit: BTreeMap<SlotNumber, (Micros, ValueId)> = BTreeMap::new();
    for ev in trace.iter() {
        let (Some(node), Some(slot)) = (ev.node, ev.slot) else {
            continue;
        };
        match &ev.kind {
            EventKind::Propose { value, since } => {
                proposals.insert(
                    (slot, *value),
                    Proposal {
                        node,
                        since: *since,
                        finalized: None,
                        committed: None,
                    },
                );
            }
            EventKind::Finalize { value, .. } => {
                if let Some(p) = proposals.get_mut(&(slot, *value)).filter(|p| p.node == node) {
                    p.finalized.get_or_insert(ev.at);
                }
            }
            EventKind::LogCommit { value } => {
                if let Some(p) = proposals.get_mut(&(slot, *value)).filter(|p| p.node == node) {
                    p.committed.get_or_insert(ev.at);
                }
                if !ctx.byzantine.contains(&node) {
                    first_commit.entry(slot).or_insert((ev.at, *value));
                }
            }
            _ => {}
        }
    }

    let count = starts.len();
    let mut fin: Vec<Vec<Micros>> = vec![Vec::new(); count];
    let mut com: Vec<Vec<Micros>> = vec![Vec::new(); count];
    for p in proposals.values() {
        let ph = phase_of(&starts, p.since);
        if let Some(t) = p.finalized {
            fin[ph].push(t - p.since);
        }
        if let Some(t) = p.committed {
            com[ph].push(t - p.since);
        }
    }
    let mut committed = vec![0u64; count];
    let mut skipped = vec![0u64; count];
    let mut by = vec![vec![0u64; ctx.n]; count];
    for (at, value) in first_commit.values() {
        let ph = phase_of(&starts, *at);
        match value.sender() {
            Some(s) => {
                committed[ph] += 1;
                if let Some(c) = by[ph].get_mut(s.index()) {
                    *c += 1;
                }
            }
            None if *at >= ctx.gst => skipped[ph] += 1,
            None => {}
        }
    }
    let mean = |v: &[Micros]| (!v.is_empty()).then(|| us_to_ms(v.iter().sum::<Micros>()) / v.len() as f64);
    let phases = (0..count)
        .map(|i| {
            let start = starts[i];
            let end = starts.get(i + 1).copied().unwrap_or(ctx.duration.max(start));
            let secs = (end - start) as f64 / 1e6;
            PhaseMetrics {
                scenario: ctx.scenario.clone(),
                phase: i,
                regime: ctx.regime.clone(),
                start_ms: us_to_ms(start),
                end_ms: us_to_ms(end),
                finality_ms: mean(&fin[i]),
                commit_ms: mean(&com[i]),
                throughput_bps: if secs > 0.0 { committed[i] as f64 / secs } else { 0.0 },
                committed: committed[i],
                skipped: skipped[i],
                proposed_by: by[i].clone(),
            }
        })
        .collect();
    MetricsRecord { phases }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.3}"))
}

impl MetricsRecord {
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "schema_version",
            "scenario",
            "phase",
            "regime",
            "finality_ms",
            "commit_ms",
            "throughput_bps",
            "skipped",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..n).map(|i| format!("proposed_by_{i}")));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.phases
            .iter()
            .map(|p| {
                let mut row = vec![
                    CSV_SCHEMA_VERSION.to_string(),
                    p.scenario.clone(),
                    p.phase.to_string(),
                    p.regime.clone(),
                    fmt_opt(p.finality_ms),
                    fmt_opt(p.commit_ms),
                    format!("{:.3}", p.throughput_bps),
                    p.skipped.to_string(),
                ];
                row.extend(p.proposed_by.iter().map(|c| c.to_string()));
                row
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl io::Write, n: usize, header: bool) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if header {
            out.write_record(Self::csv_header(n))?;
        }
        for row in self.csv_rows() {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self, n: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, n, true).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn total_committed(&self) -> u64 {
        self.phases.iter().map(|p| p.committed).sum()
    }

    pub fn total_skipped(&self) -> u64 {
        self.phases.iter().map(|p| p.skipped).sum()
    }
}
