//! Seeded schedule generators for property campaigns.
//!
//! Schedule `i` of a campaign depends only on `(base_seed, i)`, so any
//! single run can be reproduced in isolation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ByzMode, FaultSpec, Ms, ScenarioConfig, WindowSpec};
use crate::ticketing::RegimeSpec;
use crate::types::{max_faults, NodeId};

/// Run length of campaign schedules.
pub const CAMPAIGN_MS: f64 = 200.0;

fn rng_for(base_seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Grid point `index` of `n ∈ {4, 7}`, `L ∈ {2f+1, 8, 50}`, `K ∈ {1, 2}`.
fn grid(index: usize) -> (usize, u64, u64) {
    let n = [4, 7][index % 2];
    let f = max_faults(n) as u64;
    let l = [2 * f + 1, 8, 50][(index / 2) % 3];
    let k = [1, 2][(index / 6) % 2];
    (n, l, k)
}

/// A run seed that TOML can represent.
fn run_seed(rng: &mut ChaCha8Rng) -> u64 {
    rng.gen_range(0..=i64::MAX as u64)
}

fn hybrid_base(name: String, seed: u64, n: usize, l: u64, k: u64, rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(n);
    cfg.name = name;
    cfg.seed = seed;
    cfg.epoch_len = l;
    cfg.concurrency = k;
    cfg.gsw = cfg.msw();
    cfg.regime = RegimeSpec::Htr {
        batch: rng.gen_range(1..=l),
    };
    cfg.duration_ms = Ms(CAMPAIGN_MS);
    cfg.gst_ms = Ms(0.2 * CAMPAIGN_MS);
    cfg
}

fn pick_nodes(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let mut all: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
    all.shuffle(rng);
    all.truncate(count);
    all.sort();
    all
}

/// Crash-only schedules with between zero and `f` crashes. Every sixth
/// schedule is fault-free.
pub fn crash_schedules(count: usize, base_seed: u64) -> Vec<ScenarioConfig> {
    (0..count)
        .map(|i| {
            let mut rng = rng_for(base_seed, i);
            let (n, l, k) = grid(i);
            let mut cfg = hybrid_base(format!("crash-{i}"), run_seed(&mut rng), n, l, k, &mut rng);
            let crashes = if i % 6 == 5 {
                0
            } else {
                rng.gen_range(1..=max_faults(n))
            };
            cfg.faults = pick_nodes(n, crashes, &mut rng)
                .into_iter()
                .map(|node| FaultSpec::Crash {
                    node,
                    at_ms: Ms((rng.gen_range(0.0..0.8 * CAMPAIGN_MS) * 1000.0).round() / 1000.0),
                })
                .collect();
            cfg
        })
        .collect()
}

/// Schedules with up to `f` Byzantine servers. The first Byzantine node
/// cycles through `Starve`, `ColludeOnly` and `DoubleGrant`; colluders are
/// the Byzantine nodes themselves.
pub fn byzantine_schedules(count: usize, base_seed: u64) -> Vec<ScenarioConfig> {
    (0..count)
        .map(|i| {
            let mut rng = rng_for(base_seed, i);
            let (n, l, k) = grid(i);
            let mut cfg = hybrid_base(format!("byz-{i}"), run_seed(&mut rng), n, l, k, &mut rng);
            let count = rng.gen_range(1..=max_faults(n));
            let byz = pick_nodes(n, count, &mut rng);
            let modes = [ByzMode::Starve, ByzMode::ColludeOnly, ByzMode::DoubleGrant];
            cfg.faults = byz
                .iter()
                .enumerate()
                .map(|(j, node)| {
                    let mode = if j == 0 {
                        modes[i % 3]
                    } else {
                        *modes.choose(&mut rng).expect("non-empty")
                    };
                    FaultSpec::ByzServer {
                        node: *node,
                        mode,
                        colluders: if mode == ByzMode::ColludeOnly {
                            byz.clone()
                        } else {
                            Vec::new()
                        },
                        window: WindowSpec::default(),
                    }
                })
                .collect();
            cfg
        })
        .collect()
}

/// One double-granting server, optionally joined by crashes up to `f`.
pub fn double_grant_schedules(count: usize, base_seed: u64) -> Vec<ScenarioConfig> {
    (0..count)
        .map(|i| {
            let mut rng = rng_for(base_seed, i);
            let (n, l, k) = grid(i);
            let mut cfg = hybrid_base(format!("double-grant-{i}"), run_seed(&mut rng), n, l, k, &mut rng);
            let f = max_faults(n);
            let nodes = pick_nodes(n, rng.gen_range(1..=f), &mut rng);
            cfg.faults = nodes
                .iter()
                .enumerate()
                .map(|(j, node)| {
                    if j == 0 {
                        FaultSpec::ByzServer {
                            node: *node,
                            mode: ByzMode::DoubleGrant,
                            colluders: Vec::new(),
                            window: WindowSpec::default(),
                        }
                    } else {
                        FaultSpec::Crash {
                            node: *node,
                            at_ms: Ms(rng.gen_range(0.0..CAMPAIGN_MS).round()),
                        }
                    }
                })
                .collect();
            cfg
        })
        .collect()
}

/// Node 3 grants every ticket of its managed epochs to itself and proposes
/// correctly otherwise, so it stays a candidate and keeps winning
/// elections. With `L = n` every unmanaged round-robin epoch readmits it.
pub fn adversarial_chain_quality() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.name = "adversarial-chain-quality".into();
    cfg.epoch_len = 4;
    cfg.concurrency = 2;
    cfg.gsw = cfg.msw();
    cfg.regime = RegimeSpec::Htr { batch: 4 };
    cfg.faults = vec![FaultSpec::ByzServer {
        node: NodeId(3),
        mode: ByzMode::ColludeOnly,
        colluders: vec![NodeId(3)],
        window: WindowSpec::default(),
    }];
    cfg
}
