//! Builds a scenario from TOML, runs it, then sweeps one field.

use ticketforge::cli::{apply_override, execute};
use ticketforge::config::ScenarioConfig;

const TOML: &str = r#"
name = "custom"
n = 7
epoch_len = 10
concurrency = 2
gsw = 10
seed = 3
duration_ms = 150
gst_ms = 30
timeout_ms = 20

[regime]
kind = "htr"
batch = 5

[[faults]]
kind = "crash"
node = 4
at_ms = 60

[[faults]]
kind = "silent"
node = 2
from_ms = 20
to_ms = 90
"#;

fn main() {
    let cfg = ScenarioConfig::from_toml(TOML).expect("valid config");
    let o = execute(&cfg).expect("valid config");
    print!("{}", o.metrics.to_csv(cfg.n));
    for v in &o.verdicts {
        println!("{v}");
    }

    println!("\ntimeout_ms sweep:");
    for t in ["5", "20", "80"] {
        let c = apply_override(&cfg, "timeout_ms", t).expect("valid override");
        let o = execute(&c).expect("valid config");
        println!(
            "  timeout {t:>2} ms: {} committed, {} skipped",
            o.metrics.total_committed(),
            o.metrics.total_skipped()
        );
    }
}
