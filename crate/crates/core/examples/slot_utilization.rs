//! Crash-only campaign over n ∈ {4, 7}, L ∈ {2f+1, 8, 50}, K ∈ {1, 2} with
//! GST at 20% of the run. Prints skipped slots against the bound.
//!
//! ```text
//! cargo run --release --example slot_utilization [count]
//! ```

use rayon::prelude::*;
use ticketforge::campaign::crash_schedules;
use ticketforge::oracle::{check_slot_utilization, OracleContext};
use ticketforge::sim;

fn main() {
    let count = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let rows: Vec<_> = crash_schedules(count, 1)
        .par_iter()
        .map(|cfg| {
            let trace = sim::run(cfg).expect("campaign schedules are valid");
            let v = check_slot_utilization(&trace, &OracleContext::from_config(cfg));
            (cfg.clone(), v)
        })
        .collect();
    let mut held = 0;
    for (cfg, v) in &rows {
        held += usize::from(v.passed());
        println!(
            "{:<10} n={} L={:<2} K={} crashes={}  {}",
            cfg.name,
            cfg.n,
            cfg.epoch_len,
            cfg.concurrency,
            cfg.faults.len(),
            v.detail
        );
    }
    println!("bound held in {held}/{}", rows.len());
}
