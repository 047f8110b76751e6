//! A silent ticket holder rotates across phases. The hybrid regime drops it
//! from the candidate set; plain round robin keeps timing out on its slots.

use ticketforge::cli::execute;
use ticketforge::oracle::{check_slot_utilization_between, OracleContext};
use ticketforge::scenario;
use ticketforge::types::ms_to_us;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let b = scenario::builtin("fig4-like", seed).expect("builtin exists");
    let silent = ["none", "3", "0", "1", "none"];
    for cfg in &b.variants {
        let o = execute(cfg).expect("builtin is valid");
        let ctx = OracleContext::from_config(cfg);
        println!("{}", cfg.regime.label());
        for (p, who) in o.metrics.phases.iter().zip(silent) {
            let v = check_slot_utilization_between(&o.trace, &ctx, ms_to_us(p.start_ms), ms_to_us(p.end_ms));
            println!(
                "  phase {} silent={:<4} {:>6.0} bps  skipped {:>4}  {}",
                p.phase, who, p.throughput_bps, p.skipped, v.detail
            );
        }
    }
}
