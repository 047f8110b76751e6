//! Command-line front end: `run`, `sweep`, `verify`, `list-scenarios`.
//!
//! Everything here is callable in-process through [`main_with`], which the
//! binary wraps; tests drive it the same way.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::harness::{collect_metrics, MetricsContext, MetricsRecord, PhaseMetrics};
use crate::oracle::{check_all, OracleContext, PropertyVerdict};
use crate::scenario;
use crate::trace::{EventKind, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ORACLE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Output root used when neither `--out` nor the environment names one.
pub const DEFAULT_OUT_ROOT: &str = "out";
pub const OUT_ENV: &str = "TICKETFORGE_OUT";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "ticketforge",
    version,
    about = "Ticketing-regime simulator and property oracle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a scenario and check every applicable property.
    Run {
        /// Builtin name (optionally `name/REGIME`) or TOML file.
        config: String,
        /// Output directory; defaults to `<root>/<scenario>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario over a parameter grid such as `gsw=1,10,50;K=1,2`.
    Sweep {
        config: String,
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a stored trace against a scenario without re-simulating.
    Verify {
        trace: PathBuf,
        config: String,
        /// Print verdicts as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// List builtin scenarios and their variants.
    ListScenarios,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("unknown scenario `{0}`: not a file and not a builtin (see list-scenarios)")]
    Unknown(String),
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

/// Parses `args` (including the program name) and executes the command.
/// `env_out` is the value of `TICKETFORGE_OUT`, if set.
pub fn main_with<I, T>(args: I, env_out: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let root = env_out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    let result = match cli.command {
        Command::Run { config, out: dir, seed } => cmd_run(&config, dir, seed, &root, out),
        Command::Sweep {
            config,
            grid,
            out: dir,
            seed,
        } => cmd_sweep(&config, &grid, dir, seed, &root, out),
        Command::Verify { trace, config, json } => cmd_verify(&trace, &config, json, out),
        Command::ListScenarios => cmd_list(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}

/// Resolves a builtin name, `builtin/REGIME`, or a TOML file path.
pub fn resolve(spec: &str, seed: Option<u64>) -> Result<(String, Vec<ScenarioConfig>), CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(CliError::io(format!("reading {spec}")))?;
        let mut cfg = ScenarioConfig::from_toml(&text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        return Ok((cfg.name.clone(), vec![cfg]));
    }
    let (name, label) = match spec.split_once('/') {
        Some((n, l)) => (n, Some(l)),
        None => (spec, None),
    };
    let b = scenario::builtin(name, seed).ok_or_else(|| CliError::Unknown(spec.to_string()))?;
    let variants: Vec<ScenarioConfig> = match label {
        None => b.variants,
        Some(l) => b.variants.into_iter().filter(|v| v.regime.label() == l).collect(),
    };
    if variants.is_empty() {
        return Err(CliError::Unknown(spec.to_string()));
    }
    Ok((b.name.to_string(), variants))
}

/// Directory-safe form of a variant label, e.g. `MTR(B=10)` → `mtr-b-10`.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

#[derive(Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub regime: String,
    pub seed: u64,
    pub n: usize,
    pub dir: String,
    pub committed: u64,
    pub skipped: u64,
    pub passed: bool,
    pub phases: Vec<PhaseMetrics>,
    pub verdicts: Vec<PropertyVerdict>,
}

#[derive(Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub passed: bool,
    pub variants: Vec<VariantSummary>,
}

/// One simulated variant with its metrics and verdicts.
pub struct Outcome {
    pub config: ScenarioConfig,
    pub trace: Trace,
    pub metrics: MetricsRecord,
    pub verdicts: Vec<PropertyVerdict>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(PropertyVerdict::passed)
    }

    fn summary(&self, dir: &str) -> VariantSummary {
        VariantSummary {
            name: self.config.name.clone(),
            regime: self.config.regime.label(),
            seed: self.config.seed,
            n: self.config.n,
            dir: dir.to_string(),
            committed: self.metrics.total_committed(),
            skipped: self.metrics.total_skipped(),
            passed: self.passed(),
            phases: self.metrics.phases.clone(),
            verdicts: self.verdicts.clone(),
        }
    }
}

/// Simulates one configuration and evaluates it.
pub fn execute(cfg: &ScenarioConfig) -> Result<Outcome, ConfigError> {
    let trace = crate::sim::run(cfg)?;
    let metrics = collect_metrics(&trace, &MetricsContext::from_config(cfg));
    let verdicts = check_all(&trace, &OracleContext::from_config(cfg));
    Ok(Outcome {
        config: cfg.clone(),
        trace,
        metrics,
        verdicts,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    // Written beside the target and renamed so readers never see a partial file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(CliError::io(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(CliError::io(format!("writing {}", path.display())))
}

fn metrics_csv(outcomes: &[&Outcome]) -> Vec<u8> {
    let n = outcomes.iter().map(|o| o.config.n).max().unwrap_or(0);
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(MetricsRecord::csv_header(n)).expect("writing to memory");
        for o in outcomes {
            for mut row in o.metrics.csv_rows() {
                row.resize(MetricsRecord::csv_header(n).len(), String::new());
                w.write_record(row).expect("writing to memory");
            }
        }
        w.flush().expect("writing to memory");
    }
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("summary serializes");
    v.push(b'\n');
    v
}

/// Writes one variant's files into `dir`.
fn write_outcome(dir: &Path, scenario: &str, o: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    write_file(&dir.join("trace.log"), o.trace.to_text().as_bytes())?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&[o]))?;
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        passed: o.passed(),
        variants: vec![o.summary(".")],
    };
    write_file(&dir.join("summary.json"), &json_bytes(&summary))
}

fn print_verdicts(out: &mut dyn Write, o: &Outcome) {
    let _ = writeln!(out, "== {} (seed {})", o.config.name, o.config.seed);
    for p in &o.metrics.phases {
        let _ = writeln!(
            out,
            "   phase {}: {:.0} bps, {} skipped, finality {}",
            p.phase,
            p.throughput_bps,
            p.skipped,
            p.finality_ms.map_or("-".to_string(), |f| format!("{f:.3} ms"))
        );
    }
    for v in &o.verdicts {
        let _ = writeln!(out, "   {v}");
    }
}

fn cmd_run(
    spec: &str,
    dir: Option<PathBuf>,
    seed: Option<u64>,
    root: &Path,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (name, variants) = resolve(spec, seed)?;
    let dir = dir.unwrap_or_else(|| root.join(slug(spec)));
    let outcomes = variants.iter().map(execute).collect::<Result<Vec<_>, _>>()?;
    let multi = outcomes.len() > 1;
    let mut summaries = Vec::new();
    for o in &outcomes {
        let sub = if multi {
            slug(&o.config.regime.label())
        } else {
            ".".to_string()
        };
        let target = if multi { dir.join(&sub) } else { dir.clone() };
        write_outcome(&target, &name, o)?;
        summaries.push(o.summary(&sub));
        print_verdicts(out, o);
    }
    let passed = outcomes.iter().all(Outcome::passed);
    if multi {
        let refs: Vec<&Outcome> = outcomes.iter().collect();
        write_file(&dir.join("metrics.csv"), &metrics_csv(&refs))?;
        let summary = RunSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            scenario: name,
            passed,
            variants: summaries,
        };
        write_file(&dir.join("summary.json"), &json_bytes(&summary))?;
    }
    let _ = writeln!(out, "wrote {}", dir.display());
    Ok(if passed { EXIT_OK } else { EXIT_ORACLE })
}

fn cmd_verify(trace_path: &Path, spec: &str, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let (_, variants) = resolve(spec, None)?;
    let [cfg] = variants.as_slice() else {
        let labels: Vec<String> = variants.iter().map(|v| v.regime.label()).collect();
        return Err(CliError::Input(format!(
            "`{spec}` has {} variants; name one as {spec}/<{}>",
            labels.len(),
            labels.join("|")
        )));
    };
    let text = fs::read_to_string(trace_path).map_err(CliError::io(format!("reading {}", trace_path.display())))?;
    let trace = Trace::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", trace_path.display())))?;
    if let Some(init) = trace.iter().find_map(|e| match e.kind {
        EventKind::Init {
            n,
            f,
            epoch_len,
            concurrency,
            ..
        } => Some((n, f, epoch_len, concurrency)),
        _ => None,
    }) {
        let want = (cfg.n, cfg.faults_threshold(), cfg.epoch_len, cfg.concurrency);
        if init != want {
            return Err(CliError::Input(format!(
                "trace was produced with (n, f, L, K) = {init:?}, config says {want:?}"
            )));
        }
    }
    let verdicts = check_all(&trace, &OracleContext::from_config(cfg));
    if json {
        let _ = out.write_all(&json_bytes(&verdicts));
    } else {
        for v in &verdicts {
            let _ = writeln!(out, "{v}");
        }
    }
    Ok(if verdicts.iter().all(PropertyVerdict::passed) {
        EXIT_OK
    } else {
        EXIT_ORACLE
    })
}

fn cmd_list(out: &mut dyn Write) -> Result<i32, CliError> {
    for b in scenario::list() {
        let labels: Vec<String> = b.variants.iter().map(|v| v.regime.label()).collect();
        let _ = writeln!(out, "{:<16} {}", b.name, b.summary);
        let _ = writeln!(out, "{:<16} variants: {}", "", labels.join(", "));
    }
    Ok(EXIT_OK)
}

/// One axis of a sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2;key2=v3`.
pub fn parse_grid(spec: &str) -> Result<Vec<Axis>, CliError> {
    let mut axes = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("grid axis `{part}` is not key=v1,v2")))?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(CliError::Input(format!("grid axis `{key}` has no values")));
        }
        axes.push(Axis {
            key: key.trim().to_string(),
            values,
        });
    }
    if axes.is_empty() {
        return Err(CliError::Input("empty grid".into()));
    }
    Ok(axes)
}

fn canonical_key(key: &str) -> &str {
    match key {
        "L" => "epoch_len",
        "K" => "concurrency",
        "GSW" => "gsw",
        "B" | "batch" => "regime.batch",
        "regime" => "regime.kind",
        other => other,
    }
}

fn scalar(v: &str) -> toml::Value {
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_string())
    }
}

/// Returns `cfg` with `key` (a dotted path or alias) set to `value`.
pub fn apply_override(cfg: &ScenarioConfig, key: &str, value: &str) -> Result<ScenarioConfig, ConfigError> {
    let parse_err = |m: String| ConfigError::Parse(m);
    let mut root = toml::Value::try_from(cfg).map_err(|e| parse_err(e.to_string()))?;
    let path: Vec<&str> = canonical_key(key).split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut node = &mut root;
    for p in parents {
        let table = node
            .as_table_mut()
            .ok_or_else(|| parse_err(format!("`{key}` does not name a config field")))?;
        node = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| parse_err(format!("`{key}` does not name a config field")))?;
    let mut v = scalar(value);
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(*last), &v) {
        v = toml::Value::Float(*i as f64);
    }
    table.insert(last.to_string(), v);
    let next: ScenarioConfig = root
        .try_into()
        .map_err(|e: toml::de::Error| parse_err(format!("{key}={value}: {e}")))?;
    next.validate()?;
    Ok(next)
}

/// Seed of a sweep point: a hash of the base seed and the point's coordinates.
pub fn derive_seed(base: u64, coords: &[(String, String)]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_be_bytes());
    for (k, v) in coords {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b";");
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

fn points(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut acc: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        acc = acc
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    acc
}

#[derive(Serialize)]
struct SweepPoint {
    coords: Vec<(String, String)>,
    variant: String,
    seed: Option<u64>,
    status: String,
    phases: Vec<PhaseMetrics>,
    failed: Vec<&'static str>,
}

fn cmd_sweep(
    spec: &str,
    grid: &str,
    dir: Option<PathBuf>,
    seed: Option<u64>,
    root: &Path,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (_, variants) = resolve(spec, seed)?;
    let axes = parse_grid(grid)?;
    let explicit_seed = axes.iter().any(|a| a.key == "seed");
    let jobs: Vec<(Vec<(String, String)>, &ScenarioConfig)> = points(&axes)
        .into_iter()
        .flat_map(|p| variants.iter().map(move |v| (p.clone(), v)))
        .collect();
    let results: Vec<SweepPoint> = jobs
        .par_iter()
        .map(|(coords, base)| {
            let cfg = coords
                .iter()
                .try_fold((*base).clone(), |c, (k, v)| apply_override(&c, k, v))
                .map(|mut c| {
                    if !explicit_seed {
                        c.seed = derive_seed(base.seed, coords);
                    }
                    c
                });
            let variant = base.regime.label();
            match cfg.and_then(|c| execute(&c)) {
                Ok(o) => {
                    let failed: Vec<&'static str> =
                        o.verdicts.iter().filter(|v| !v.passed()).map(|v| v.property).collect();
                    SweepPoint {
                        coords: coords.clone(),
                        variant,
                        seed: Some(o.config.seed),
                        status: if failed.is_empty() {
                            "ok".into()
                        } else {
                            format!("oracle-fail:{}", failed.join("+"))
                        },
                        phases: o.metrics.phases,
                        failed,
                    }
                }
                Err(e) => SweepPoint {
                    coords: coords.clone(),
                    variant,
                    seed: None,
                    status: format!("config-error:{}", one_line(&e.to_string())),
                    phases: Vec::new(),
                    failed: Vec::new(),
                },
            }
        })
        .collect();

    let n = results
        .iter()
        .flat_map(|r| r.phases.iter().map(|p| p.proposed_by.len()))
        .max()
        .unwrap_or(0);
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
        header.extend(["variant", "seed", "status"].map(String::from));
        let metric_header = MetricsRecord::csv_header(n);
        header.extend(metric_header.iter().cloned());
        w.write_record(&header).expect("writing to memory");
        for r in &results {
            let lead: Vec<String> = r
                .coords
                .iter()
                .map(|(_, v)| v.clone())
                .chain([
                    r.variant.clone(),
                    r.seed.map_or(String::new(), |s| s.to_string()),
                    r.status.clone(),
                ])
                .collect();
            let rows = MetricsRecord {
                phases: r.phases.clone(),
            }
            .csv_rows();
            if rows.is_empty() {
                let mut row = lead.clone();
                row.resize(header.len(), String::new());
                w.write_record(row).expect("writing to memory");
            }
            for m in rows {
                let mut row = lead.clone();
                row.extend(m);
                row.resize(header.len(), String::new());
                w.write_record(row).expect("writing to memory");
            }
        }
        w.flush().expect("writing to memory");
    }
    let dir = dir.unwrap_or_else(|| root.join(format!("{}-sweep", slug(spec))));
    fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    write_file(&dir.join("sweep.csv"), &buf)?;
    write_file(&dir.join("sweep.json"), &json_bytes(&results))?;
    let bad = results.iter().filter(|r| r.status != "ok").count();
    for r in results.iter().filter(|r| r.status != "ok") {
        let _ = writeln!(out, "point {:?} {}: {}", r.coords, r.variant, r.status);
    }
    let _ = writeln!(
        out,
        "{} points, {} failed; wrote {}",
        results.len(),
        bad,
        dir.join("sweep.csv").display()
    );
    Ok(if results.iter().any(|r| r.status.starts_with("config-error")) {
        EXIT_CONFIG
    } else if bad > 0 {
        EXIT_ORACLE
    } else {
        EXIT_OK
    })
}

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("MTR(B=10)"), "mtr-b-10");
        assert_eq!(slug("UTR(all)"), "utr-all");
        assert_eq!(slug("fig2"), "fig2");
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("gsw=1,10; K=1,2").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(points(&g).len(), 4);
        assert!(parse_grid("gsw").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let base = ScenarioConfig::baseline(4);
        let c = apply_override(&base, "B", "7").unwrap();
        assert_eq!(c.regime.batch(), Some(7));
        let c = apply_override(&base, "costs.process_ms", "1").unwrap();
        assert_eq!(c.costs.process_ms.0, 1.0);
        let c = apply_override(&base, "L", "12").unwrap();
        assert_eq!(c.epoch_len, 12);
        assert!(apply_override(&base, "L", "2").is_err());
        assert!(apply_override(&base, "nonsense", "1").is_err());
    }

    #[test]
    fn derived_seeds_depend_on_coordinates() {
        let a = derive_seed(1, &[("gsw".into(), "1".into())]);
        let b = derive_seed(1, &[("gsw".into(), "10".into())]);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(1, &[("gsw".into(), "1".into())]));
    }

    #[test]
    fn resolve_variants() {
        let (_, v) = resolve("table2-like/MTR(B=10)", None).unwrap();
        assert_eq!(v.len(), 1);
        assert!(matches!(resolve("table2-like/XYZ", None), Err(CliError::Unknown(_))));
        assert!(matches!(resolve("nope", None), Err(CliError::Unknown(_))));
    }
}
