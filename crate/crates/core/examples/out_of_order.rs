//! Node 1 never broadcasts its block for slot 2. Later slots finalize
//! first, and their commit waits until slot 2 is decided as a skip.

use ticketforge::oracle::find_out_of_order;
use ticketforge::scenario;
use ticketforge::sim;

fn main() {
    let cfg = scenario::out_of_order(scenario::DEFAULT_SEED);
    let trace = sim::run(&cfg).expect("builtin is valid");
    match find_out_of_order(&trace) {
        Some(w) => {
            println!(
                "node {}: slot {} finalized while slot {} was open",
                w.node, w.later, w.hole
            );
            for l in &w.lines {
                println!("  {l}");
            }
        }
        None => println!("no out-of-order finalization in this run"),
    }
}
