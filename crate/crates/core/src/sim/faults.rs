//! Time-dependent fault and slowness schedule of a scenario.

use std::collections::BTreeSet;

use crate::config::{FaultSpec, FaultWindow, ScenarioConfig};
use crate::ticketing::ServerMode;
use crate::types::{Micros, NodeId, SlotNumber};

#[derive(Clone, Debug)]
struct Slowdown {
    window: FaultWindow,
    compute: f64,
    serialization: f64,
}

#[derive(Clone, Debug, Default)]
struct NodeFaults {
    crash_at: Option<Micros>,
    silent: Vec<FaultWindow>,
    server: Vec<(FaultWindow, ServerMode)>,
    slow: Vec<Slowdown>,
    compute: f64,
    serialization: f64,
}

/// Per-node view of the configured faults.
#[derive(Clone, Debug)]
pub struct FaultPlan {
    nodes: Vec<NodeFaults>,
    byzantine: BTreeSet<NodeId>,
}

impl FaultPlan {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let mut nodes: Vec<NodeFaults> = (0..cfg.n)
            .map(|i| {
                let p = cfg.node_profile(NodeId(i as u32));
                NodeFaults {
                    compute: p.map_or(1.0, |p| p.compute),
                    serialization: p.map_or(1.0, |p| p.serialization),
                    ..NodeFaults::default()
                }
            })
            .collect();
        for fs in &cfg.faults {
            let nf = &mut nodes[fs.node().index()];
            match fs {
                FaultSpec::Crash { at_ms, .. } => {
                    let at = at_ms.us();
                    nf.crash_at = Some(nf.crash_at.map_or(at, |c| c.min(at)));
                }
                FaultSpec::Silent { window, .. } => nf.silent.push(window.window()),
                FaultSpec::ByzServer { window, .. } => nf
                    .server
                    .push((window.window(), fs.server_mode().expect("byzantine server"))),
                FaultSpec::Slow {
                    compute,
                    serialization,
                    window,
                    ..
                } => nf.slow.push(Slowdown {
                    window: window.window(),
                    compute: *compute,
                    serialization: *serialization,
                }),
            }
        }
        Self {
            nodes,
            byzantine: cfg.byzantine_nodes(),
        }
    }

    pub fn crash_time(&self, node: NodeId) -> Option<Micros> {
        self.nodes[node.index()].crash_at
    }

    /// The node withholds its proposal for `sn`.
    pub fn is_silent(&self, node: NodeId, now: Micros, sn: SlotNumber) -> bool {
        self.nodes[node.index()].silent.iter().any(|w| w.covers(now, sn))
    }

    pub fn server_mode(&self, node: NodeId, now: Micros) -> ServerMode {
        self.nodes[node.index()]
            .server
            .iter()
            .find(|(w, _)| w.covers_time(now))
            .map_or(ServerMode::Correct, |(_, m)| m.clone())
    }

    pub fn compute_multiplier(&self, node: NodeId, now: Micros) -> f64 {
        let nf = &self.nodes[node.index()];
        nf.slow
            .iter()
            .filter(|s| s.window.covers_time(now))
            .fold(nf.compute, |m, s| m * s.compute)
    }

    pub fn serialization_multiplier(&self, node: NodeId, now: Micros) -> f64 {
        let nf = &self.nodes[node.index()];
        nf.slow
            .iter()
            .filter(|s| s.window.covers_time(now))
            .fold(nf.serialization, |m, s| m * s.serialization)
    }

    pub fn byzantine(&self) -> &BTreeSet<NodeId> {
        &self.byzantine
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ByzMode, Ms, NodeProfile, WindowSpec};

    #[test]
    fn windows_and_multipliers() {
        let mut cfg = ScenarioConfig::baseline(4);
        cfg.assert_guarantees = false;
        cfg.nodes.push(NodeProfile {
            id: NodeId(3),
            compute: 2.0,
            serialization: 2.5,
            workload: None,
        });
        cfg.faults = vec![
            FaultSpec::Slow {
                node: NodeId(3),
                compute: 3.0,
                serialization: 1.0,
                window: WindowSpec::time(10.0, 20.0),
            },
            FaultSpec::Silent {
                node: NodeId(1),
                window: WindowSpec::slots(5, 5),
            },
            FaultSpec::ByzServer {
                node: NodeId(2),
                mode: ByzMode::Starve,
                colluders: vec![],
                window: WindowSpec::time(0.0, 1.0),
            },
            FaultSpec::Crash {
                node: NodeId(0),
                at_ms: Ms(7.0),
            },
        ];
        let plan = FaultPlan::new(&cfg);
        assert_eq!(plan.compute_multiplier(NodeId(3), 0), 2.0);
        assert_eq!(plan.compute_multiplier(NodeId(3), 15_000), 6.0);
        assert_eq!(plan.serialization_multiplier(NodeId(3), 15_000), 2.5);
        assert!(plan.is_silent(NodeId(1), 99, SlotNumber(5)));
        assert!(!plan.is_silent(NodeId(1), 99, SlotNumber(6)));
        assert_eq!(plan.server_mode(NodeId(2), 500), ServerMode::Starve);
        assert_eq!(plan.server_mode(NodeId(2), 1000), ServerMode::Correct);
        assert_eq!(plan.crash_time(NodeId(0)), Some(7000));
        assert_eq!(plan.byzantine().len(), 1);
    }
}
