//! Replays the builtin `fig2` schedule and prints how each epoch was
//! decided, together with who filled its slots.
//!
//! ```text
//! cargo run --example regime_switching
//! ```

use std::collections::BTreeMap;

use ticketforge::scenario;
use ticketforge::sim;
use ticketforge::trace::EventKind;
use ticketforge::types::NodeId;

fn main() {
    let cfg = scenario::fig2(scenario::DEFAULT_SEED);
    let trace = sim::run(&cfg).expect("builtin is valid");
    let observer = Some(NodeId(1));

    let mut fills: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for ev in trace.iter().filter(|e| e.node == observer) {
        if let (EventKind::LogCommit { value }, Some(slot)) = (&ev.kind, ev.slot) {
            let who = value.sender().map_or("⊥".to_string(), |s| s.to_string());
            fills.entry((slot.0 - 1) / cfg.epoch_len + 1).or_default().push(who);
        }
    }

    println!("epoch  TR  C          slots");
    for ev in trace.iter().filter(|e| e.node == observer) {
        if let EventKind::EpochDecided {
            epoch,
            regime,
            candidates,
        } = &ev.kind
        {
            if epoch.0 > 6 {
                break;
            }
            let c: Vec<String> = candidates.iter().map(|n| n.to_string()).collect();
            let slots = fills.get(&epoch.0).map(|v| v.join(" ")).unwrap_or_default();
            println!("{:>5} {:>3}  [{:<8}] {}", epoch.0, regime.as_tr(), c.join(","), slots);
        }
    }
}
