use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use ticketforge::config::{FaultSpec, Ms, ScenarioConfig};
use ticketforge::log::{Block, LogView, SlotValue};
use ticketforge::oracle::{check_all, check_consistency, OracleContext, Status};
use ticketforge::sim;
use ticketforge::ticketing::{RegimeSpec, TicketProof};
use ticketforge::trace::Trace;
use ticketforge::types::{max_faults, NodeId, SlotNumber};

fn block(sender: u32, slot: u64) -> SlotValue {
    let sn = SlotNumber(slot);
    SlotValue::Block(Arc::new(Block::new(
        NodeId(sender),
        sn,
        vec![slot as u8],
        TicketProof::RoundRobin { slot: sn },
    )))
}

proptest! {
    #[test]
    fn commits_follow_slot_order_whatever_the_finality_order(
        order in Just((1u64..=40).collect::<Vec<_>>()).prop_shuffle(),
        skips in proptest::collection::btree_set(1u64..=40, 0..10),
    ) {
        let mut log = LogView::new();
        let mut committed = Vec::new();
        let mut finalized = BTreeSet::new();
        for sn in order {
            let value = if skips.contains(&sn) { SlotValue::Bottom } else { block((sn % 4) as u32, sn) };
            prop_assert!(log.finalize(SlotNumber(sn), value).unwrap());
            finalized.insert(sn);
            committed.extend(log.advance_commits().into_iter().map(|c| c.slot.0));
            let prefix = (1..).take_while(|s| finalized.contains(s)).count() as u64;
            prop_assert_eq!(log.frontier().0, prefix);
        }
        prop_assert_eq!(committed, (1..=40).collect::<Vec<_>>());
    }

    #[test]
    fn refinalizing_with_another_value_is_rejected(slot in 1u64..50, a in 0u32..4, b in 0u32..4) {
        let mut log = LogView::new();
        log.finalize(SlotNumber(slot), block(a, slot)).unwrap();
        let again = log.finalize(SlotNumber(slot), block(b, slot));
        prop_assert_eq!(again.is_ok(), a == b);
        prop_assert_eq!(log.finalize(SlotNumber(slot), SlotValue::Bottom).is_err(), true);
    }
}

fn small_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        prop_oneof![Just(4usize), Just(5), Just(7)],
        0u64..=8,
        1u64..=2,
        any::<u64>(),
        0usize..3,
        proptest::collection::vec((0u32..7, 0.0f64..60.0), 0..3),
    )
        .prop_map(|(n, extra, k, seed, regime, crashes)| {
            let mut cfg = ScenarioConfig::baseline(n);
            let l = 2 * max_faults(n) as u64 + 1 + extra;
            cfg.seed = seed >> 1;
            cfg.epoch_len = l;
            cfg.concurrency = k;
            cfg.gsw = cfg.msw();
            cfg.duration_ms = Ms(80.0);
            cfg.gst_ms = Ms(10.0);
            cfg.regime = match regime {
                0 => RegimeSpec::Htr { batch: 1 + seed % l },
                1 => RegimeSpec::Utr { candidates: None },
                _ => RegimeSpec::Mtr {
                    server: NodeId(0),
                    batch: 1 + seed % l,
                },
            };
            let mut seen = BTreeSet::new();
            cfg.faults = crashes
                .into_iter()
                .map(|(node, at)| (node % n as u32, at))
                .filter(|(node, _)| *node != 0 && seen.insert(*node))
                .take(max_faults(n))
                .map(|(node, at)| FaultSpec::Crash {
                    node: NodeId(node),
                    at_ms: Ms(at.round()),
                })
                .collect();
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn crash_runs_satisfy_every_applicable_property(cfg in small_config()) {
        let trace = sim::run(&cfg).unwrap();
        for v in check_all(&trace, &OracleContext::from_config(&cfg)) {
            prop_assert!(v.status != Status::Fail, "{}", v);
        }
    }

    #[test]
    fn runs_are_reproducible_and_traces_round_trip(cfg in small_config()) {
        let a = sim::run(&cfg).unwrap();
        let b = sim::run(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(Trace::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn a_forged_finalization_is_caught(cfg in small_config(), pick in any::<prop::sample::Index>()) {
        let text = sim::run(&cfg).unwrap().to_text();
        let candidates: Vec<&str> = text
            .lines()
            .filter(|l| l.contains(" FINALIZE ") && !l.contains("value=bot"))
            .collect();
        prop_assume!(!candidates.is_empty());
        let line = candidates[pick.index(candidates.len())];
        let forged = line.split(" value=").next().unwrap().to_string() + " value=bot via=fast";
        let trace = Trace::parse(&text.replacen(line, &forged, 1)).unwrap();
        let v = check_consistency(&trace, &OracleContext::from_config(&cfg));
        prop_assert_eq!(v.status, Status::Fail);
        prop_assert_eq!(check_consistency(&v.witness_trace(), &OracleContext::from_config(&cfg)).status, Status::Fail);
    }
}

/// With epochs shorter than the group, a crashed ticketing server followed
/// by round-robin epochs that each include the crashed node overshoots the
/// skip bound: the crash costs 3 managed slots, then 4 round-robin slots
/// while every full-set epoch shows only 2f active senders and resets C.
#[test]
fn short_epochs_can_exceed_the_skip_bound() {
    let mut cfg = ScenarioConfig::baseline(4);
    cfg.seed = 184_934_102_149_912_862;
    cfg.epoch_len = 3;
    cfg.concurrency = 1;
    cfg.gsw = cfg.msw();
    cfg.regime = RegimeSpec::Htr { batch: 1 };
    cfg.duration_ms = Ms(200.0);
    cfg.gst_ms = Ms(40.0);
    cfg.faults = vec![FaultSpec::Crash {
        node: NodeId(1),
        at_ms: Ms(70.553),
    }];
    let trace = sim::run(&cfg).unwrap();
    let v = ticketforge::oracle::check_slot_utilization(&trace, &OracleContext::from_config(&cfg));
    assert_eq!(v.status, Status::Fail);
    assert_eq!((v.measured, v.bound), (Some(7.0), Some(6.0)));
}
