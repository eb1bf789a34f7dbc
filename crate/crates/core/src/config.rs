//! Scenario files: parsing, default filling and validation.
//!
//! Scenarios are JSON objects. Unknown keys are rejected. After parsing,
//! every derived default (neighbor timeout, reply window, flow ids and stop
//! times) is resolved so that the effective configuration can be written
//! out and parsed back unchanged.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{PowerProfile, RangeConfig};
use crate::ids::{FlowId, NodeId};
use crate::mobility::{MobilityKind, MobilityModelConfig};
use crate::qos::{FlowSpec, QosRequirement, ReservationMode};
use crate::radio::RadioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{}invalid `{field}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

impl ConfigError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Io { .. } => 3,
            ConfigError::Syntax(_) => 2,
            ConfigError::Invalid { .. } => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AreaConfig {
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        Self {
            width_m: 1000.0,
            height_m: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    UniformRandom,
    Explicit(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioOverride {
    pub node: NodeId,
    pub tx_range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesConfig {
    pub count: usize,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    #[serde(default = "default_battery")]
    pub initial_battery_j: f64,
    #[serde(default)]
    pub radio_overrides: Vec<RadioOverride>,
}

fn default_placement() -> Placement {
    Placement::UniformRandom
}

fn default_battery() -> f64 {
    1000.0
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub profile: PowerProfile<f64>,
    pub range: RangeConfig<f64>,
    /// Derive the Transmit draw from the distance to the next hop.
    pub range_adjust: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipathPolicy {
    RoundRobin,
    PrimaryBackup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub hello_interval: f64,
    /// Defaults to 3 × hello_interval.
    pub neighbor_timeout: Option<f64>,
    pub max_copies_per_rreq: u32,
    /// Defaults to 2 × nominal one-hop delay × net_diameter_ttl.
    pub reply_window: Option<f64>,
    pub max_paths: usize,
    pub repair_ttl: u32,
    pub repair_timeout: f64,
    pub discovery_timeout: f64,
    pub max_discovery_retries: u32,
    pub net_diameter_ttl: u32,
    pub multipath_policy: MultipathPolicy,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            hello_interval: 1.0,
            neighbor_timeout: None,
            max_copies_per_rreq: 3,
            reply_window: None,
            max_paths: 3,
            repair_ttl: 2,
            repair_timeout: 0.5,
            discovery_timeout: 1.0,
            max_discovery_retries: 2,
            net_diameter_ttl: 10,
            multipath_policy: MultipathPolicy::RoundRobin,
        }
    }
}

impl RoutingConfig {
    pub fn neighbor_timeout(&self) -> f64 {
        self.neighbor_timeout.unwrap_or(3.0 * self.hello_interval)
    }
}

/// Nominal control payload used to size the default reply window.
pub const NOMINAL_CONTROL_BITS: u64 = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosConfig {
    pub eta: f64,
    pub levels: u8,
    pub initial_level: u8,
    pub window: f64,
    pub promotion_budget: u32,
    pub demote_factor: f64,
    pub reservation_mode: ReservationMode,
    pub queue_capacity: usize,
    pub control_queue_capacity: usize,
    pub reservation_idle_timeout: f64,
    pub retry_backoff: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            levels: 4,
            initial_level: 1,
            window: 1.0,
            promotion_budget: 50,
            demote_factor: 2.0,
            reservation_mode: ReservationMode::Apriori,
            queue_capacity: 64,
            control_queue_capacity: 256,
            reservation_idle_timeout: 5.0,
            retry_backoff: 1.0,
        }
    }
}

/// A traffic entry as written in the file; omitted fields get defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub flow_id: Option<FlowId>,
    pub src: NodeId,
    pub dst: NodeId,
    pub rate: f64,
    #[serde(default = "default_packet_size")]
    pub packet_size: u64,
    #[serde(default = "default_flow_qos")]
    pub qos: QosRequirement,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: Option<f64>,
}

fn default_packet_size() -> u64 {
    4096
}

fn default_flow_qos() -> QosRequirement {
    QosRequirement {
        max_delay: 1.0,
        max_hops: 16,
        min_bw: 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Node fails permanently (not a battery death).
    Kill,
    /// Node is teleported to a new position.
    Relocate { x: f64, y: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub at: f64,
    pub node: NodeId,
    pub kind: FaultKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub area: AreaConfig,
    pub nodes: NodesConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub mobility: MobilityModelConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub qos: QosConfig,
    #[serde(default)]
    pub traffic: Vec<FlowConfig>,
    #[serde(default)]
    pub faults: Vec<FaultConfig>,
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.resolve_defaults();
    cfg.validate().map_err(|e| e.anchor(text))?;
    Ok(cfg)
}

/// A validation failure before it is anchored to a source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Dotted path, e.g. `traffic[1].rate`.
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Best-effort line lookup: walks the dotted path through the source,
    /// finding each key (and the n-th occurrence for list indices) after
    /// the previous match.
    pub fn anchor(self, text: &str) -> ConfigError {
        let mut offset = 0usize;
        let mut found = true;
        for seg in self.field.split('.') {
            let (key, nth) = match seg.find('[') {
                Some(i) => (&seg[..i], seg[i + 1..seg.len() - 1].parse::<usize>().ok()),
                None => (seg, None),
            };
            let needle = format!("\"{key}\"");
            match text[offset..].find(&needle) {
                Some(pos) => offset += pos + needle.len(),
                None => {
                    found = false;
                    break;
                }
            }
            if let Some(n) = nth {
                // Skip to the n-th object opening brace inside the list.
                let mut hits = 0;
                let mut idx = None;
                for (i, ch) in text[offset..].char_indices() {
                    if ch == '{' {
                        if hits == n {
                            idx = Some(i);
                            break;
                        }
                        hits += 1;
                    }
                }
                match idx {
                    Some(i) => offset += i,
                    None => {
                        found = false;
                        break;
                    }
                }
            }
        }
        let line = found.then(|| text[..offset].matches('\n').count() + 1);
        ConfigError::Invalid {
            field: self.field,
            line,
            message: self.message,
        }
    }
}

fn check(ok: bool, field: &str, msg: &str) -> Result<(), Violation> {
    if ok {
        Ok(())
    } else {
        Err(Violation::new(field, msg))
    }
}

impl ScenarioConfig {
    /// Fills every derived default in place.
    pub fn resolve_defaults(&mut self) {
        let r = &mut self.routing;
        if r.neighbor_timeout.is_none() {
            r.neighbor_timeout = Some(3.0 * r.hello_interval);
        }
        if r.reply_window.is_none() {
            let hop = self.radio.nominal_hop_delay(NOMINAL_CONTROL_BITS);
            r.reply_window = Some(2.0 * hop * f64::from(r.net_diameter_ttl));
        }
        let duration = self.duration_s;
        let mut used: BTreeSet<FlowId> = self.traffic.iter().filter_map(|f| f.flow_id).collect();
        let mut next = 0u32;
        for f in &mut self.traffic {
            if f.flow_id.is_none() {
                while used.contains(&FlowId(next)) {
                    next += 1;
                }
                f.flow_id = Some(FlowId(next));
                used.insert(FlowId(next));
            }
            if f.stop.is_none() {
                f.stop = Some(duration);
            }
        }
    }

    pub fn validate(&self) -> Result<(), Violation> {
        check(self.duration_s > 0.0 && self.duration_s.is_finite(), "duration_s", "must be positive")?;
        check(self.area.width_m > 0.0, "area.width_m", "must be positive")?;
        check(self.area.height_m > 0.0, "area.height_m", "must be positive")?;

        let n = self.nodes.count;
        check(n >= 1, "nodes.count", "need at least one node")?;
        check(self.nodes.initial_battery_j > 0.0, "nodes.initial_battery_j", "must be positive")?;
        if let Placement::Explicit(pos) = &self.nodes.placement {
            check(pos.len() == n, "nodes.placement", "explicit list length must equal nodes.count")?;
            for p in pos {
                check(
                    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= self.area.width_m && p[1] <= self.area.height_m,
                    "nodes.placement",
                    "position outside the area",
                )?;
            }
        }
        for (i, o) in self.nodes.radio_overrides.iter().enumerate() {
            let f = format!("nodes.radio_overrides[{i}]");
            check(o.node.0 < n, &format!("{f}.node"), "node id out of range")?;
            check(o.tx_range > 0.0, &format!("{f}.tx_range"), "must be positive")?;
        }

        let r = &self.radio;
        check(r.tx_range > 0.0, "radio.tx_range", "must be positive")?;
        check(r.bitrate > 0.0, "radio.bitrate", "must be positive")?;
        check(
            (0.0..=1.0).contains(&r.loss_probability),
            "radio.loss_probability",
            "must lie in [0, 1]",
        )?;
        check(r.proc_jitter_max >= 0.0, "radio.proc_jitter_max", "must be non-negative")?;

        let m = &self.mobility;
        if m.kind == MobilityKind::RandomWaypoint {
            check(m.v_min > 0.0, "mobility.v_min", "must be positive")?;
            check(m.v_max >= m.v_min, "mobility.v_max", "must be at least v_min")?;
            check(m.pause >= 0.0, "mobility.pause", "must be non-negative")?;
        }

        self.energy
            .profile
            .validate()
            .map_err(|e| Violation::new("energy.profile", e.to_string()))?;
        self.energy
            .range
            .validate()
            .map_err(|e| Violation::new("energy.range", e.to_string()))?;

        let rt = &self.routing;
        check(rt.hello_interval > 0.0, "routing.hello_interval", "must be positive")?;
        check(rt.neighbor_timeout() > 0.0, "routing.neighbor_timeout", "must be positive")?;
        check(rt.max_copies_per_rreq >= 1, "routing.max_copies_per_rreq", "must be at least 1")?;
        check(rt.reply_window.is_some_and(|w| w > 0.0), "routing.reply_window", "must be positive")?;
        check(rt.max_paths >= 1, "routing.max_paths", "must be at least 1")?;
        check(rt.repair_ttl >= 1, "routing.repair_ttl", "must be at least 1")?;
        check(rt.repair_timeout > 0.0, "routing.repair_timeout", "must be positive")?;
        check(rt.discovery_timeout > 0.0, "routing.discovery_timeout", "must be positive")?;
        check(rt.net_diameter_ttl >= 1, "routing.net_diameter_ttl", "must be at least 1")?;

        let q = &self.qos;
        check(q.eta > 0.0 && q.eta <= 1.0, "qos.eta", "must lie in (0, 1]")?;
        check(q.levels >= 1, "qos.levels", "must be at least 1")?;
        check(q.initial_level < q.levels, "qos.initial_level", "must be below qos.levels")?;
        check(q.window > 0.0, "qos.window", "must be positive")?;
        check(q.demote_factor >= 1.0, "qos.demote_factor", "must be at least 1")?;
        check(q.queue_capacity >= 1, "qos.queue_capacity", "must be at least 1")?;
        check(q.control_queue_capacity >= 1, "qos.control_queue_capacity", "must be at least 1")?;
        check(q.reservation_idle_timeout > 0.0, "qos.reservation_idle_timeout", "must be positive")?;
        check(q.retry_backoff >= 0.0, "qos.retry_backoff", "must be non-negative")?;

        let mut ids = BTreeSet::new();
        for (i, f) in self.traffic.iter().enumerate() {
            let p = |s: &str| format!("traffic[{i}].{s}");
            check(f.src.0 < n, &p("src"), "node id out of range")?;
            check(f.dst.0 < n, &p("dst"), "node id out of range")?;
            check(f.src != f.dst, &p("dst"), "must differ from src")?;
            check(f.rate > 0.0, &p("rate"), "must be positive")?;
            check(f.packet_size > 0, &p("packet_size"), "must be positive")?;
            check(f.qos.is_valid(), &p("qos"), "all thresholds must be positive")?;
            check(f.start >= 0.0, &p("start"), "must be non-negative")?;
            check(f.stop.is_some_and(|s| s > f.start), &p("stop"), "must be after start")?;
            check(ids.insert(f.flow_id), &p("flow_id"), "duplicate flow id")?;
        }
        for (i, f) in self.faults.iter().enumerate() {
            check(f.node.0 < n, &format!("faults[{i}].node"), "node id out of range")?;
            check(f.at >= 0.0, &format!("faults[{i}].at"), "must be non-negative")?;
        }
        Ok(())
    }

    /// Effective flow specifications. Call after `resolve_defaults`.
    pub fn flows(&self) -> Vec<FlowSpec> {
        self.traffic
            .iter()
            .enumerate()
            .map(|(i, f)| FlowSpec {
                flow_id: f.flow_id.unwrap_or(FlowId(i as u32)),
                src: f.src,
                dst: f.dst,
                rate: f.rate,
                packet_size: f.packet_size,
                qos: f.qos,
                start: f.start,
                stop: f.stop.unwrap_or(self.duration_s),
            })
            .collect()
    }

    pub fn reply_window(&self) -> f64 {
        self.routing.reply_window.unwrap_or_else(|| {
            2.0 * self.radio.nominal_hop_delay(NOMINAL_CONTROL_BITS) * f64::from(self.routing.net_diameter_ttl)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
