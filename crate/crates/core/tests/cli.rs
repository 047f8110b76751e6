use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ticketforge::scenario;

const BIN: &str = env!("CARGO_BIN_EXE_ticketforge");

fn ticketforge(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("TICKETFORGE_OUT");
    if let Some(root) = env_out {
        cmd.env("TICKETFORGE_OUT", root);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_TOML: &str = r#"
name = "small"
n = 4
epoch_len = 4
concurrency = 2
gsw = 4
duration_ms = 40
timeout_ms = 10

[regime]
kind = "htr"
batch = 2
"#;

#[test]
fn run_writes_three_files_under_env_root() {
    let root = tempfile::tempdir().unwrap();
    let o = ticketforge(&["run", "fig2"], Some(root.path()));
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let dir = root.path().join("fig2");
    for f in ["trace.log", "metrics.csv", "summary.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["scenario"], "fig2");
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("schema_version,scenario,phase,regime,finality_ms,commit_ms,throughput_bps,skipped,"));
}

#[test]
fn explicit_out_beats_env_root() {
    let root = tempfile::tempdir().unwrap();
    let explicit = root.path().join("here");
    let o = ticketforge(
        &["run", "out-of-order", "--out", explicit.to_str().unwrap()],
        Some(&root.path().join("env")),
    );
    assert_eq!(code(&o), 0);
    assert!(explicit.join("trace.log").is_file());
    assert!(!root.path().join("env").exists());
}

#[test]
fn seed_flag_changes_the_trace() {
    let root = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let dir = root.path().join(seed);
        let o = ticketforge(
            &["run", "crash-recovery", "--seed", seed, "--out", dir.to_str().unwrap()],
            None,
        );
        assert_eq!(code(&o), 0);
        fs::read(dir.join("trace.log")).unwrap()
    };
    let (a, b, again) = (read("1"), read("2"), read("1"));
    assert_ne!(a, b);
    assert_eq!(a, again);
}

#[test]
fn multi_variant_builtin_gets_one_directory_per_regime() {
    let root = tempfile::tempdir().unwrap();
    let o = ticketforge(&["run", "table2-like"], Some(root.path()));
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let dir = root.path().join("table2-like");
    for sub in ["utr-0", "utr-3", "utr-all", "mtr-b-1", "mtr-b-10", "mtr-b-100"] {
        assert!(dir.join(sub).join("trace.log").is_file(), "missing {sub}");
    }
    let merged = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(merged.lines().count(), 7);
}

#[test]
fn verify_accepts_own_trace_and_rejects_tampering() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&ticketforge(&["run", "double-grant"], Some(root.path()))), 0);
    let trace = root.path().join("double-grant").join("trace.log");
    let t = trace.to_str().unwrap();

    let ok = ticketforge(&["verify", t, "double-grant"], None);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let text = fs::read_to_string(&trace).unwrap();
    let line = text
        .lines()
        .find(|l| l.contains(" FINALIZE 0 ") && !l.contains("value=bot"))
        .unwrap();
    let forged = line.split(" value=").next().unwrap().to_string() + " value=bot via=fast";
    let bad = root.path().join("bad.log");
    fs::write(&bad, text.replacen(line, &forged, 1)).unwrap();
    let o = ticketforge(&["verify", bad.to_str().unwrap(), "double-grant", "--json"], None);
    assert_eq!(code(&o), 1);
    let verdicts: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let consistency = verdicts
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["property"] == "consistency")
        .unwrap();
    assert_eq!(consistency["status"], "fail");
    assert!(!consistency["witness"].as_array().unwrap().is_empty());
}

#[test]
fn verify_refuses_a_mismatched_config() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&ticketforge(&["run", "fig2"], Some(root.path()))), 0);
    let trace = root.path().join("fig2").join("trace.log");
    let o = ticketforge(&["verify", trace.to_str().unwrap(), "double-grant"], None);
    assert_eq!(code(&o), 2);
    let o = ticketforge(&["verify", trace.to_str().unwrap(), "fig3-like"], None);
    assert_eq!(code(&o), 2, "ambiguous multi-variant config");
}

#[test]
fn config_errors_exit_with_two() {
    let root = tempfile::tempdir().unwrap();
    let missing_field = root.path().join("missing.toml");
    fs::write(&missing_field, "name = \"x\"\nn = 4\n").unwrap();
    let too_small = root.path().join("small-n.toml");
    fs::write(&too_small, SMALL_TOML.replace("n = 4", "n = 3")).unwrap();
    for args in [
        vec!["run", "no-such-scenario"],
        vec!["run", missing_field.to_str().unwrap()],
        vec!["run", too_small.to_str().unwrap()],
        vec!["run", "fig2", "--seed", "minus-one"],
        vec!["frobnicate"],
        vec!["sweep", "fig2", "--grid", "nonsense"],
    ] {
        let o = ticketforge(&args, Some(root.path()));
        assert_eq!(code(&o), 2, "{args:?}");
    }
}

#[test]
fn toml_config_runs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, SMALL_TOML).unwrap();
    let out = root.path().join("o");
    let o = ticketforge(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = ticketforge(
        &["verify", out.join("trace.log").to_str().unwrap(), cfg.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, SMALL_TOML).unwrap();
    let out = root.path().join("sweep");
    let o = ticketforge(
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--grid",
            "K=1,2;gsw=1,2,4",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "K");
    assert_eq!(&headers[1], "gsw");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let status = headers.iter().position(|h| h == "status").unwrap();
    assert!(rows.iter().all(|r| &r[status] == "ok"));
}

#[test]
fn invalid_sweep_points_are_reported_as_config_errors() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, SMALL_TOML).unwrap();
    let out = root.path().join("sweep");
    let o = ticketforge(
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--grid",
            "gsw=4,8",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 2);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("config-error:invalid config: - gsw:"));
}

#[test]
fn list_scenarios_names_every_builtin() {
    let o = ticketforge(&["list-scenarios"], None);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in scenario::NAMES {
        assert!(text.contains(name), "{name}");
    }
}
