//! Three fast nodes and one slow node (node 3) under six ticket
//! assignments. Prints one row per assignment.
//!
//! ```text
//! cargo run --release --example static_heterogeneity [seed]
//! ```

use ticketforge::cli::execute;
use ticketforge::scenario;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let b = scenario::builtin("table2-like", seed).expect("builtin exists");
    println!(
        "{:<11} {:>9} {:>9} {:>9}  proposed by 0/1/2/3",
        "regime", "final ms", "commit ms", "bps"
    );
    for cfg in &b.variants {
        let o = execute(cfg).expect("builtin is valid");
        let p = &o.metrics.phases[0];
        let by: Vec<String> = p.proposed_by.iter().map(u64::to_string).collect();
        println!(
            "{:<11} {:>9.3} {:>9.3} {:>9.0}  {}",
            p.regime,
            p.finality_ms.unwrap_or(f64::NAN),
            p.commit_ms.unwrap_or(f64::NAN),
            p.throughput_bps,
            by.join("/")
        );
    }
}
