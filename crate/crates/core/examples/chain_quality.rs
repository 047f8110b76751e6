//! Byzantine ticketing servers that starve, collude or double-grant, plus a
//! hand-built server that keeps every grant for itself.

use rayon::prelude::*;
use ticketforge::campaign::{adversarial_chain_quality, byzantine_schedules};
use ticketforge::oracle::{check_chain_quality, OracleContext};
use ticketforge::sim;

fn main() {
    let count = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let mut cfgs = byzantine_schedules(count, 2);
    cfgs.push(adversarial_chain_quality());
    let rows: Vec<_> = cfgs
        .par_iter()
        .map(|cfg| {
            let trace = sim::run(cfg).expect("campaign schedules are valid");
            (
                cfg.name.clone(),
                check_chain_quality(&trace, &OracleContext::from_config(cfg)),
            )
        })
        .collect();
    for (name, v) in rows {
        println!("{name:<26} {v}");
    }
}
