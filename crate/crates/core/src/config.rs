//! Scenario configuration.
//!
//! Configs are TOML documents: flat `key = value` pairs plus repeated
//! `[[nodes]]`, `[[faults]]` tables. Times are milliseconds (integer or
//! fractional) and are converted to the engine's microsecond clock.
//!
//! ```toml
//! name = "example"
//! n = 4
//! epoch_len = 50
//! concurrency = 2
//! gsw = 50
//! duration_ms = 2000
//! timeout_ms = 10
//!
//! [regime]
//! kind = "htr"
//! batch = 10
//!
//! [[faults]]
//! kind = "silent"
//! node = 3
//! from_ms = 500
//! to_ms = 1000
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ticketing::{RegimeSpec, ServerMode};
use crate::types::{max_faults, ms_to_us, Micros, NodeId, SlotNumber};

/// Milliseconds accepted as either an integer or a float.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "MsRepr", into = "f64")]
pub struct Ms(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum MsRepr {
    Int(i64),
    Float(f64),
}

impl From<MsRepr> for Ms {
    fn from(r: MsRepr) -> Self {
        match r {
            MsRepr::Int(i) => Ms(i as f64),
            MsRepr::Float(f) => Ms(f),
        }
    }
}

impl From<Ms> for f64 {
    fn from(m: Ms) -> f64 {
        m.0
    }
}

impl Ms {
    pub fn us(self) -> Micros {
        ms_to_us(self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PreGst {
    /// Extra uniform delay in `[0, extra_ms]` before GST.
    Delay { extra_ms: Ms },
    /// Messages sent before GST are lost.
    Drop,
}

impl Default for PreGst {
    fn default() -> Self {
        PreGst::Delay { extra_ms: Ms(20.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetProfile {
    pub base_delay_ms: Ms,
    pub jitter_ms: Ms,
    pub pre_gst: PreGst,
}

impl Default for NetProfile {
    fn default() -> Self {
        Self {
            base_delay_ms: Ms(0.25),
            jitter_ms: Ms(0.1),
            pre_gst: PreGst::default(),
        }
    }
}

/// Processing costs of a node with compute multiplier 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Creating and signing one proposal.
    pub create_ms: Ms,
    /// Validating a received proposal and casting the node's votes.
    pub process_ms: Ms,
    /// Per-hop vote handling added to each vote message.
    pub vote_ms: Ms,
    /// Ticketing server work per grant request.
    pub grant_ms: Ms,
    /// Sender-side serialization per outgoing message.
    pub serialization_ms: Ms,
    /// Queued proposals whose slot was decided longer ago than this are
    /// skipped by a lagging node (state transfer).
    pub catchup_ms: Ms,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            create_ms: Ms(0.05),
            process_ms: Ms(0.1),
            vote_ms: Ms(0.01),
            grant_ms: Ms(0.01),
            serialization_ms: Ms(0.01),
            catchup_ms: Ms(50.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Supply {
    #[default]
    Unbounded,
    /// Payloads become available at a fixed rate.
    Rate { blocks_per_sec: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadProfile {
    pub payload_size: usize,
    pub supply: Supply,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            payload_size: 2,
            supply: Supply::Unbounded,
        }
    }
}

/// Static per-node hardware and workload overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeProfile {
    pub id: NodeId,
    #[serde(default = "one")]
    pub compute: f64,
    #[serde(default = "one")]
    pub serialization: f64,
    #[serde(default)]
    pub workload: Option<WorkloadProfile>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzMode {
    Starve,
    ColludeOnly,
    DoubleGrant,
}

/// Fault and heterogeneity injections. Windows are half-open in time
/// (`[from_ms, to_ms)`) and inclusive in slots; omitted bounds are open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultSpec {
    Crash {
        node: NodeId,
        at_ms: Ms,
    },
    Silent {
        node: NodeId,
        #[serde(flatten)]
        window: WindowSpec,
    },
    ByzServer {
        node: NodeId,
        mode: ByzMode,
        #[serde(default)]
        colluders: Vec<NodeId>,
        #[serde(flatten)]
        window: WindowSpec,
    },
    Slow {
        node: NodeId,
        #[serde(default = "one")]
        compute: f64,
        #[serde(default = "one")]
        serialization: f64,
        #[serde(flatten)]
        window: WindowSpec,
    },
}

impl FaultSpec {
    pub fn node(&self) -> NodeId {
        match self {
            FaultSpec::Crash { node, .. }
            | FaultSpec::Silent { node, .. }
            | FaultSpec::ByzServer { node, .. }
            | FaultSpec::Slow { node, .. } => *node,
        }
    }

    /// Slowness is heterogeneity, not a fault.
    pub fn is_fault(&self) -> bool {
        !matches!(self, FaultSpec::Slow { .. })
    }

    pub fn is_byzantine(&self) -> bool {
        matches!(self, FaultSpec::ByzServer { .. })
    }

    pub fn server_mode(&self) -> Option<ServerMode> {
        match self {
            FaultSpec::ByzServer { mode, colluders, .. } => Some(match mode {
                ByzMode::Starve => ServerMode::Starve,
                ByzMode::ColludeOnly => ServerMode::ColludeOnly(colluders.iter().copied().collect()),
                ByzMode::DoubleGrant => ServerMode::DoubleGrant,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_ms: Option<Ms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_ms: Option<Ms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_slot: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_slot: Option<u64>,
}

impl WindowSpec {
    pub fn time(from_ms: f64, to_ms: f64) -> Self {
        Self {
            from_ms: Some(Ms(from_ms)),
            to_ms: Some(Ms(to_ms)),
            ..Self::default()
        }
    }

    pub fn slots(from: u64, to: u64) -> Self {
        Self {
            from_slot: Some(from),
            to_slot: Some(to),
            ..Self::default()
        }
    }

    pub fn window(&self) -> FaultWindow {
        FaultWindow {
            from: self.from_ms.map_or(0, Ms::us),
            to: self.to_ms.map_or(Micros::MAX, Ms::us),
            first_slot: self.from_slot.unwrap_or(0),
            last_slot: self.to_slot.unwrap_or(u64::MAX),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaultWindow {
    pub from: Micros,
    pub to: Micros,
    pub first_slot: u64,
    pub last_slot: u64,
}

impl FaultWindow {
    pub fn covers_time(&self, now: Micros) -> bool {
        now >= self.from && now < self.to
    }

    pub fn covers(&self, now: Micros, sn: SlotNumber) -> bool {
        self.covers_time(now) && sn.0 >= self.first_slot && sn.0 <= self.last_slot
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    /// Fault threshold; defaults to the largest `f` with `n >= 3f+1`.
    #[serde(default)]
    pub f: Option<usize>,
    /// `L`: slots per epoch.
    pub epoch_len: u64,
    /// `K`: concurrently running epochs.
    pub concurrency: u64,
    /// Global sliding window.
    pub gsw: u64,
    #[serde(default)]
    pub seed: u64,
    /// Common election seed of the hybrid regime; defaults to `seed` as
    /// eight big-endian bytes.
    #[serde(default)]
    pub election_seed: Option<Vec<u8>>,
    pub duration_ms: Ms,
    #[serde(default = "zero_ms")]
    pub gst_ms: Ms,
    /// Post-GST delay bound.
    #[serde(default = "default_delta")]
    pub delta_ms: Ms,
    /// Slot timer length.
    pub timeout_ms: Ms,
    /// Latency of the fallback agreement step; defaults to `2 * delta_ms`.
    #[serde(default)]
    pub fallback_ms: Option<Ms>,
    pub regime: RegimeSpec,
    #[serde(default)]
    pub net: NetProfile,
    #[serde(default)]
    pub costs: CostModel,
    #[serde(default)]
    pub workload: WorkloadProfile,
    #[serde(default)]
    pub nodes: Vec<NodeProfile>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Length of the reporting phases used by the metrics.
    #[serde(default)]
    pub phase_ms: Option<Ms>,
    /// Enforce the `f` fault budget so that guarantees may be asserted.
    #[serde(default = "yes")]
    pub assert_guarantees: bool,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn zero_ms() -> Ms {
    Ms(0.0)
}

fn default_delta() -> Ms {
    Ms(2.0)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&str> {
        match self {
            ConfigError::Parse(_) => Vec::new(),
            ConfigError::Invalid(v) => v.iter().map(|e| e.field.as_str()).collect(),
        }
    }
}

impl ScenarioConfig {
    /// A small fault-free hybrid scenario used as a base by builtins and tests.
    pub fn baseline(n: usize) -> Self {
        Self {
            name: default_name(),
            n,
            f: None,
            epoch_len: 8,
            concurrency: 2,
            gsw: 8,
            seed: 1,
            election_seed: None,
            duration_ms: Ms(200.0),
            gst_ms: Ms(0.0),
            delta_ms: default_delta(),
            timeout_ms: Ms(20.0),
            fallback_ms: None,
            regime: RegimeSpec::Htr { batch: 4 },
            net: NetProfile::default(),
            costs: CostModel::default(),
            workload: WorkloadProfile::default(),
            nodes: Vec::new(),
            faults: Vec::new(),
            phase_ms: None,
            assert_guarantees: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn faults_threshold(&self) -> usize {
        self.f.unwrap_or_else(|| max_faults(self.n))
    }

    pub fn quorum(&self) -> usize {
        2 * self.faults_threshold() + 1
    }

    /// Structural maximum window `(K - 1) L`, at least one epoch.
    pub fn msw(&self) -> u64 {
        self.concurrency.saturating_sub(1).max(1) * self.epoch_len
    }

    pub fn uses_window(&self) -> bool {
        !matches!(self.regime, RegimeSpec::Mtr { .. })
    }

    pub fn fallback_latency(&self) -> Ms {
        self.fallback_ms.unwrap_or(Ms(2.0 * self.delta_ms.0))
    }

    pub fn election_seed_bytes(&self) -> Vec<u8> {
        self.election_seed
            .clone()
            .unwrap_or_else(|| self.seed.to_be_bytes().to_vec())
    }

    pub fn node_profile(&self, id: NodeId) -> Option<&NodeProfile> {
        self.nodes.iter().find(|p| p.id == id)
    }

    /// Nodes that are faulty at some point of the run.
    pub fn faulty_nodes(&self) -> BTreeSet<NodeId> {
        self.faults
            .iter()
            .filter(|f| f.is_fault())
            .map(FaultSpec::node)
            .collect()
    }

    pub fn byzantine_nodes(&self) -> BTreeSet<NodeId> {
        self.faults
            .iter()
            .filter(|f| f.is_byzantine())
            .map(FaultSpec::node)
            .collect()
    }

    pub fn has_byzantine(&self) -> bool {
        self.faults.iter().any(FaultSpec::is_byzantine)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        let f = self.faults_threshold();
        if self.n == 0 {
            err("n", "must be at least 1".into());
        }
        if self.n < 3 * f + 1 {
            err("f", format!("n = {} requires f <= {}", self.n, max_faults(self.n)));
        }
        if self.epoch_len < (2 * f + 1) as u64 {
            err(
                "epoch_len",
                format!("L = {} must be at least 2f+1 = {}", self.epoch_len, 2 * f + 1),
            );
        }
        if self.concurrency == 0 {
            err("concurrency", "K must be at least 1".into());
        }
        if self.gsw == 0 {
            err("gsw", "must be at least 1".into());
        }
        if matches!(self.regime, RegimeSpec::Htr { .. }) && self.gsw > self.msw() {
            err("gsw", format!("GSW = {} exceeds MSW = {}", self.gsw, self.msw()));
        }
        if self.timeout_ms <= self.delta_ms {
            err(
                "timeout_ms",
                format!(
                    "slot timeout {} ms must exceed delta {} ms",
                    self.timeout_ms.0, self.delta_ms.0
                ),
            );
        }
        if self.delta_ms.0 <= 0.0 {
            err("delta_ms", "must be positive".into());
        }
        if self.duration_ms.0 < 0.0 {
            err("duration_ms", "must not be negative".into());
        }
        if self.net.base_delay_ms.0 < 0.0 || self.net.jitter_ms.0 < 0.0 {
            err("net", "delays must not be negative".into());
        }
        if self.net.base_delay_ms.0 + self.net.jitter_ms.0 > self.delta_ms.0 {
            err("net.base_delay_ms", "base + jitter must not exceed delta".into());
        }
        if let Some(b) = self.regime.batch() {
            if b == 0 {
                err("regime.batch", "must be at least 1".into());
            }
        }
        match &self.regime {
            RegimeSpec::Utr { candidates: Some(c) } => {
                if c.is_empty() {
                    err("regime.candidates", "must not be empty".into());
                }
                if c.iter().any(|id| id.index() >= self.n) {
                    err("regime.candidates", "contains an unknown node".into());
                }
            }
            RegimeSpec::Mtr { server, .. } if server.index() >= self.n => {
                err("regime.server", format!("node {server} does not exist"));
            }
            _ => {}
        }
        for (i, p) in self.nodes.iter().enumerate() {
            if p.id.index() >= self.n {
                err(&format!("nodes[{i}].id"), format!("node {} does not exist", p.id));
            }
            if p.compute <= 0.0 || p.serialization <= 0.0 {
                err(&format!("nodes[{i}]"), "multipliers must be positive".into());
            }
        }
        for (i, fs) in self.faults.iter().enumerate() {
            if fs.node().index() >= self.n {
                err(
                    &format!("faults[{i}].node"),
                    format!("node {} does not exist", fs.node()),
                );
            }
            if let FaultSpec::Slow {
                compute, serialization, ..
            } = fs
            {
                if *compute <= 0.0 || *serialization <= 0.0 {
                    err(&format!("faults[{i}]"), "multipliers must be positive".into());
                }
            }
            if let FaultSpec::Crash { at_ms, .. } = fs {
                if *at_ms > self.duration_ms {
                    err(&format!("faults[{i}].at_ms"), "crash after the end of the run".into());
                }
            }
        }
        if self.assert_guarantees {
            let faulty = self.faulty_nodes();
            if faulty.len() > f {
                err(
                    "faults",
                    format!("{} distinct faulty nodes exceed f = {f}", faulty.len()),
                );
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{} n={} L={} K={} GSW={} seed={}]",
            self.name,
            self.regime.label(),
            self.n,
            self.epoch_len,
            self.concurrency,
            self.gsw,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            name = "example"
            n = 4
            epoch_len = 50
            concurrency = 2
            gsw = 50
            duration_ms = 2000
            timeout_ms = 10

            [regime]
            kind = "htr"
            batch = 10

            [[faults]]
            kind = "silent"
            node = 3
            from_ms = 500
            to_ms = 1000.5
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(cfg.regime, RegimeSpec::Htr { batch: 10 });
        assert_eq!(cfg.faults_threshold(), 1);
        assert_eq!(cfg.msw(), 50);
        let FaultSpec::Silent { window, .. } = &cfg.faults[0] else {
            panic!("expected silent fault")
        };
        assert_eq!(window.window().to, 1_000_500);
        assert_eq!(cfg.fallback_latency(), Ms(4.0));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::baseline(4);
        cfg.faults.push(FaultSpec::ByzServer {
            node: NodeId(1),
            mode: ByzMode::ColludeOnly,
            colluders: vec![NodeId(1)],
            window: WindowSpec::time(0.0, 50.0),
        });
        cfg.nodes.push(NodeProfile {
            id: NodeId(3),
            compute: 2.0,
            serialization: 2.5,
            workload: None,
        });
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn reports_every_bad_field() {
        let mut cfg = ScenarioConfig::baseline(4);
        cfg.epoch_len = 2;
        cfg.timeout_ms = Ms(1.0);
        cfg.gsw = 100;
        let err = cfg.validate().unwrap_err();
        let fields = err.fields();
        assert!(fields.contains(&"epoch_len"));
        assert!(fields.contains(&"timeout_ms"));
        assert!(fields.contains(&"gsw"));
    }

    #[test]
    fn fault_budget_enforced_only_when_asserting() {
        let mut cfg = ScenarioConfig::baseline(4);
        cfg.faults = vec![
            FaultSpec::Crash {
                node: NodeId(0),
                at_ms: Ms(1.0),
            },
            FaultSpec::Silent {
                node: NodeId(1),
                window: WindowSpec::default(),
            },
            FaultSpec::Slow {
                node: NodeId(2),
                compute: 2.0,
                serialization: 1.0,
                window: WindowSpec::default(),
            },
        ];
        assert_eq!(cfg.validate().unwrap_err().fields(), vec!["faults"]);
        cfg.assert_guarantees = false;
        cfg.validate().unwrap();
    }

    #[test]
    fn k_one_msw_is_one_epoch() {
        let mut cfg = ScenarioConfig::baseline(4);
        cfg.concurrency = 1;
        assert_eq!(cfg.msw(), cfg.epoch_len);
        cfg.validate().unwrap();
    }

    #[test]
    fn windows_are_half_open_in_time() {
        let w = WindowSpec::time(1.0, 2.0).window();
        assert!(!w.covers_time(999));
        assert!(w.covers_time(1000));
        assert!(!w.covers_time(2000));
        let s = WindowSpec::slots(5, 8).window();
        assert!(s.covers(0, SlotNumber(5)) && s.covers(10, SlotNumber(8)));
        assert!(!s.covers(0, SlotNumber(9)));
    }
}
