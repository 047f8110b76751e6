//! Stores a trace as text, reads it back, tampers with one finalization and
//! shows that the failing verdict's witness replays to the same failure.

use ticketforge::oracle::{check_all, check_consistency, OracleContext};
use ticketforge::scenario;
use ticketforge::sim;
use ticketforge::trace::Trace;

fn main() {
    let cfg = scenario::double_grant(scenario::DEFAULT_SEED);
    let ctx = OracleContext::from_config(&cfg);
    let text = sim::run(&cfg).expect("builtin is valid").to_text();

    let stored = Trace::parse(&text).expect("own output parses");
    for v in check_all(&stored, &ctx) {
        println!("{v}");
    }

    // Flip the first block finalization at node 0 to a skip.
    let mut done = false;
    let tampered: String = text
        .lines()
        .map(|l| {
            if !done && l.contains(" FINALIZE 0 ") && !l.contains("value=bot") {
                done = true;
                let (head, _) = l.split_once("value=").expect("finalize has a value");
                let via = l.rsplit_once(' ').map_or("", |(_, v)| v);
                format!("{head}value=bot {via}\n")
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let bad = Trace::parse(&tampered).expect("still well formed");
    let verdict = check_consistency(&bad, &ctx);
    println!("\nafter tampering:\n{verdict}");
    let replay = check_consistency(&verdict.witness_trace(), &ctx);
    println!("\nwitness alone:\n{replay}");
}
