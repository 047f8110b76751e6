//! Four phases in which different nodes run at half speed. Prints per-phase
//! throughput of a fixed fast proposer, round robin, and managed batches.

use ticketforge::cli::execute;
use ticketforge::scenario;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let b = scenario::builtin("fig3-like", seed).expect("builtin exists");
    let runs: Vec<_> = b
        .variants
        .iter()
        .map(|c| execute(c).expect("builtin is valid"))
        .collect();
    let slow = ["none", "3", "0", "1,2"];
    print!("{:<6} {:<6}", "phase", "slow");
    for o in &runs {
        print!(" {:>11}", o.config.regime.label());
    }
    println!();
    for (i, who) in slow.iter().enumerate() {
        print!("{i:<6} {who:<6}");
        for o in &runs {
            print!(" {:>11.0}", o.metrics.phases[i].throughput_bps);
        }
        println!();
    }
}
