//! Builtin scenarios.
//!
//! A builtin is a named list of variants; most have one. Multi-variant
//! builtins run the same workload under several ticketing regimes so their
//! metric rows can be compared side by side.

use crate::config::{
    ByzMode, CostModel, FaultSpec, Ms, NetProfile, NodeProfile, PreGst, ScenarioConfig, WindowSpec, WorkloadProfile,
};
use crate::ticketing::RegimeSpec;
use crate::types::NodeId;

#[derive(Clone, Debug)]
pub struct Builtin {
    pub name: &'static str,
    pub summary: &'static str,
    pub variants: Vec<ScenarioConfig>,
}

pub const NAMES: [&str; 7] = [
    "fig2",
    "table2-like",
    "fig3-like",
    "fig4-like",
    "out-of-order",
    "double-grant",
    "crash-recovery",
];

/// Virtual length of each reporting phase in the heterogeneity and
/// dual-mode builtins.
pub const PHASE_MS: f64 = 600.0;

/// Seed of every builtin unless overridden.
pub const DEFAULT_SEED: u64 = 1;

pub fn list() -> Vec<Builtin> {
    NAMES
        .iter()
        .map(|n| builtin(n, None).expect("listed builtins exist"))
        .collect()
}

/// Looks up a builtin; `seed` replaces the default seed of every variant.
pub fn builtin(name: &str, seed: Option<u64>) -> Option<Builtin> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let (summary, variants) = match name {
        "fig2" => (
            "hybrid regime switching over six epochs with scripted faults",
            vec![fig2(seed)],
        ),
        "table2-like" => (
            "three fast nodes and one slow node under six ticket assignments",
            table2_like(seed),
        ),
        "fig3-like" => ("four phases of rotating slowness, UTR vs MTR", fig3_like(seed)),
        "fig4-like" => (
            "four phases of rotating silent ticket holders, HTR vs UTR",
            fig4_like(seed),
        ),
        "out-of-order" => ("a withheld slot finalizes after later slots", vec![out_of_order(seed)]),
        "double-grant" => (
            "a Byzantine server hands each batch to two nodes",
            vec![double_grant(seed)],
        ),
        "crash-recovery" => ("a node crashes under the hybrid regime", vec![crash_recovery(seed)]),
        _ => return None,
    };
    Some(Builtin {
        name: NAMES.iter().find(|n| **n == name).copied().expect("matched above"),
        summary,
        variants,
    })
}

/// Network and CPU costs shared by the performance builtins.
pub fn desk_costs() -> (NetProfile, CostModel) {
    (
        NetProfile {
            base_delay_ms: Ms(0.1),
            jitter_ms: Ms(0.05),
            pre_gst: PreGst::default(),
        },
        CostModel {
            create_ms: Ms(0.05),
            process_ms: Ms(0.1),
            vote_ms: Ms(0.01),
            grant_ms: Ms(0.01),
            serialization_ms: Ms(0.01),
            catchup_ms: Ms(50.0),
        },
    )
}

fn perf_base(name: &str, seed: u64) -> ScenarioConfig {
    let (net, costs) = desk_costs();
    ScenarioConfig {
        name: name.to_string(),
        n: 4,
        f: None,
        epoch_len: 50,
        concurrency: 2,
        gsw: 100,
        seed,
        election_seed: None,
        duration_ms: Ms(PHASE_MS),
        gst_ms: Ms(0.0),
        delta_ms: Ms(2.0),
        timeout_ms: Ms(30.0),
        fallback_ms: None,
        regime: RegimeSpec::Utr { candidates: None },
        net,
        costs,
        workload: WorkloadProfile::default(),
        nodes: Vec::new(),
        faults: Vec::new(),
        phase_ms: Some(Ms(PHASE_MS)),
        assert_guarantees: true,
    }
}

fn variant(base: &ScenarioConfig, regime: RegimeSpec) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.name = format!("{}/{}", base.name, regime.label());
    cfg.regime = regime;
    cfg
}

fn utr_only(node: u32) -> RegimeSpec {
    RegimeSpec::Utr {
        candidates: Some(vec![NodeId(node)]),
    }
}

fn mtr(batch: u64) -> RegimeSpec {
    RegimeSpec::Mtr {
        server: NodeId(0),
        batch,
    }
}

/// Epochs 1 and 2 round-robin; node 0 withholds slot 5, the server of
/// epoch 3 grants nothing, node 3 withholds slot 15.
pub fn fig2(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.name = "fig2".into();
    cfg.epoch_len = 4;
    cfg.concurrency = 2;
    cfg.gsw = 4;
    cfg.seed = seed;
    cfg.election_seed = Some(vec![0x2a]);
    cfg.duration_ms = Ms(150.0);
    cfg.regime = RegimeSpec::Htr { batch: 4 };
    cfg.assert_guarantees = false;
    cfg.faults = vec![
        FaultSpec::Silent {
            node: NodeId(0),
            window: WindowSpec::slots(5, 5),
        },
        FaultSpec::ByzServer {
            node: NodeId(3),
            mode: ByzMode::Starve,
            colluders: Vec::new(),
            window: WindowSpec::default(),
        },
        FaultSpec::Silent {
            node: NodeId(3),
            window: WindowSpec::slots(15, 15),
        },
    ];
    cfg
}

/// Node 3 runs at half compute speed with a slower NIC.
pub fn table2_like(seed: u64) -> Vec<ScenarioConfig> {
    let mut base = perf_base("table2-like", seed);
    base.duration_ms = Ms(2.0 * PHASE_MS);
    base.phase_ms = None;
    base.nodes.push(NodeProfile {
        id: NodeId(3),
        compute: 2.0,
        serialization: 2.5,
        workload: None,
    });
    [
        utr_only(0),
        utr_only(3),
        RegimeSpec::Utr { candidates: None },
        mtr(1),
        mtr(10),
        mtr(100),
    ]
    .into_iter()
    .map(|r| variant(&base, r))
    .collect()
}

fn slow(node: u32, phase: usize) -> FaultSpec {
    FaultSpec::Slow {
        node: NodeId(node),
        compute: 2.0,
        serialization: 1.0,
        window: WindowSpec::time(phase as f64 * PHASE_MS, (phase + 1) as f64 * PHASE_MS),
    }
}

/// Phase 0: nobody slow; 1: node 3; 2: node 0; 3: nodes 1 and 2.
pub fn fig3_like(seed: u64) -> Vec<ScenarioConfig> {
    let mut base = perf_base("fig3-like", seed);
    base.duration_ms = Ms(4.0 * PHASE_MS);
    base.faults = vec![slow(3, 1), slow(0, 2), slow(1, 3), slow(2, 3)];
    [utr_only(0), RegimeSpec::Utr { candidates: None }, mtr(10)]
        .into_iter()
        .map(|r| variant(&base, r))
        .collect()
}

/// Phase 0: fault-free; 1: node 3 silent; 2: node 0; 3: node 1; 4: a
/// fault-free recovery phase.
pub fn fig4_like(seed: u64) -> Vec<ScenarioConfig> {
    let mut base = perf_base("fig4-like", seed);
    base.gsw = 50;
    base.timeout_ms = Ms(10.0);
    base.duration_ms = Ms(5.0 * PHASE_MS);
    base.assert_guarantees = false;
    base.faults = [(3, 1), (0, 2), (1, 3)]
        .into_iter()
        .map(|(node, phase)| FaultSpec::Silent {
            node: NodeId(node),
            window: WindowSpec::time(phase as f64 * PHASE_MS, (phase + 1) as f64 * PHASE_MS),
        })
        .collect();
    [RegimeSpec::Htr { batch: 10 }, RegimeSpec::Utr { candidates: None }]
        .into_iter()
        .map(|r| variant(&base, r))
        .collect()
}

/// Node 1 withholds slot 2; later slots finalize first and wait for the
/// hole to be filled with a skip before they commit.
pub fn out_of_order(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.name = "out-of-order".into();
    cfg.seed = seed;
    cfg.regime = RegimeSpec::Utr { candidates: None };
    cfg.duration_ms = Ms(60.0);
    cfg.faults = vec![FaultSpec::Silent {
        node: NodeId(1),
        window: WindowSpec::slots(2, 2),
    }];
    cfg
}

/// Node 2 double-grants whenever it is the server of a managed epoch.
pub fn double_grant(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.name = "double-grant".into();
    cfg.seed = seed;
    cfg.duration_ms = Ms(150.0);
    cfg.faults = vec![FaultSpec::ByzServer {
        node: NodeId(2),
        mode: ByzMode::DoubleGrant,
        colluders: Vec::new(),
        window: WindowSpec::default(),
    }];
    cfg
}

/// Node 1 crashes after a third of the run.
pub fn crash_recovery(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.name = "crash-recovery".into();
    cfg.seed = seed;
    cfg.duration_ms = Ms(150.0);
    cfg.faults = vec![FaultSpec::Crash {
        node: NodeId(1),
        at_ms: Ms(50.0),
    }];
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates() {
        for b in list() {
            assert!(!b.variants.is_empty(), "{}", b.name);
            for v in &b.variants {
                v.validate().unwrap_or_else(|e| panic!("{}: {e}", v.name));
            }
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(builtin("nope", None).is_none());
    }

    #[test]
    fn table2_has_six_rows() {
        let labels: Vec<String> = table2_like(1).iter().map(|c| c.regime.label()).collect();
        assert_eq!(
            labels,
            ["UTR(0)", "UTR(3)", "UTR(all)", "MTR(B=1)", "MTR(B=10)", "MTR(B=100)"]
        );
    }
}
