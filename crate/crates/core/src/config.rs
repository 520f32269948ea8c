//! JSON configuration files.
//!
//! Quantities may be plain SI numbers or strings with a unit suffix
//! (`"10uW"`, `"0.5 mW"`, `"8ms"`). Every problem in a file is reported with
//! the line and column of the value it concerns.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::gibbs::Multipliers;
use crate::network::{NetworkConfig, NodePowerProfile, Topology};
use crate::protocol::ProtocolVariant;
use crate::simulator::{Estimator, SimConfig, StepSchedule};
use crate::state_space::ThroughputMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// JSON pointer to the value, `""` for the whole document.
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{}:{}: {}: {}", self.line, self.column, path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("{line}:{column}: malformed JSON: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} problem(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadedConfig {
    Network { network: NetworkConfig },
    Simulation { simulation: SimConfig },
}

impl LoadedConfig {
    pub fn network(&self) -> &NetworkConfig {
        match self {
            LoadedConfig::Network { network } => network,
            LoadedConfig::Simulation { simulation } => &simulation.network,
        }
    }

    pub fn simulation(&self) -> Option<&SimConfig> {
        match self {
            LoadedConfig::Simulation { simulation } => Some(simulation),
            LoadedConfig::Network { .. } => None,
        }
    }

    /// SI-normalized JSON that loads back to the same config.
    pub fn to_json(&self) -> Value {
        match self {
            LoadedConfig::Network { network } => network_json(network),
            LoadedConfig::Simulation { simulation } => {
                let mut v = serde_json::to_value(simulation).expect("config serializes");
                v["network"] = network_json(&simulation.network);
                v
            }
        }
    }
}

fn network_json(n: &NetworkConfig) -> Value {
    let topology = match &n.topology {
        Topology::Clique(_) => Value::from("clique"),
        Topology::Graph { adjacency } => serde_json::json!({ "adjacency": adjacency }),
    };
    serde_json::json!({ "nodes": n.nodes, "topology": topology })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Power,
    Time,
    Energy,
}

// Negative factors mean "divide by": `10 / 1e6` rounds to the same double as `1e-5`, `10 * 1e-6` does not.
const POWER_UNITS: &[(&str, f64)] = &[("uW", -1e6), ("µW", -1e6), ("μW", -1e6), ("nW", -1e9), ("mW", -1e3), ("kW", 1e3), ("W", 1.0)];
const TIME_UNITS: &[(&str, f64)] =
    &[("min", 60.0), ("ms", -1e3), ("us", -1e6), ("µs", -1e6), ("μs", -1e6), ("ns", -1e9), ("h", 3600.0), ("s", 1.0)];
const ENERGY_UNITS: &[(&str, f64)] = &[("uJ", -1e6), ("µJ", -1e6), ("μJ", -1e6), ("mJ", -1e3), ("kJ", 1e3), ("J", 1.0)];

/// A plain number (already SI) or a string such as `"10uW"`.
pub fn parse_quantity(v: &Value, dim: Dimension) -> Result<f64, String> {
    let units = match dim {
        Dimension::Power => POWER_UNITS,
        Dimension::Time => TIME_UNITS,
        Dimension::Energy => ENERGY_UNITS,
    };
    let x = match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{n} is not representable"))?,
        Value::String(s) => {
            let s = s.trim();
            let (num, factor) = units
                .iter()
                .find_map(|&(u, f)| s.strip_suffix(u).map(|rest| (rest.trim_end(), f)))
                .ok_or_else(|| {
                    let names: Vec<&str> = units.iter().map(|u| u.0).collect();
                    format!("\"{s}\" needs one of the units {}", names.join(", "))
                })?;
            let x = num.parse::<f64>().map_err(|_| format!("\"{s}\" does not start with a number"))?;
            if factor < 0.0 {
                x / -factor
            } else {
                x * factor
            }
        }
        other => return Err(format!("expected a number or a string with units, got {}", kind(other))),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err("value must be finite".into())
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

pub fn validate_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Network files hold `nodes`/`homogeneous` and `topology` at the top level;
/// simulation files nest them under `network`.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let mut ck = Checker { positions: locate(text), diags: Vec::new() };
    let Some(obj) = root.as_object() else {
        ck.err("", format!("top level must be an object, got {}", kind(&root)));
        return Err(ConfigError::Invalid(ck.diags));
    };
    let loaded = if obj.contains_key("network") {
        ck.simulation(obj).map(|simulation| LoadedConfig::Simulation { simulation })
    } else {
        ck.network("", obj).map(|network| LoadedConfig::Network { network })
    };
    match loaded {
        Some(l) if ck.diags.is_empty() => Ok(l),
        _ => Err(ConfigError::Invalid(ck.diags)),
    }
}

struct Checker {
    positions: HashMap<String, (usize, usize)>,
    diags: Vec<Diagnostic>,
}

fn child(path: &str, key: &str) -> String {
    format!("{path}/{}", key.replace('~', "~0").replace('/', "~1"))
}

impl Checker {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        let mut p = path;
        let (line, column) = loop {
            if let Some(&pos) = self.positions.get(p) {
                break pos;
            }
            match p.rfind('/') {
                Some(k) => p = &p[..k],
                None => break (1, 1),
            }
        };
        self.diags.push(Diagnostic { path: path.to_string(), line, column, message: message.into() });
    }

    fn unknown_keys(&mut self, path: &str, obj: &Map<String, Value>, allowed: &[&str]) {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&child(path, k), format!("unknown field \"{k}\" (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn quantity(&mut self, path: &str, v: &Value, dim: Dimension, positive: bool) -> Option<f64> {
        match parse_quantity(v, dim) {
            Ok(x) if positive && x <= 0.0 => {
                self.err(path, format!("must be > 0, got {x}"));
                None
            }
            Ok(x) if x < 0.0 => {
                self.err(path, format!("must be ≥ 0, got {x}"));
                None
            }
            Ok(x) => Some(x),
            Err(m) => {
                self.err(path, m);
                None
            }
        }
    }

    fn number(&mut self, path: &str, v: &Value, positive: bool) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() && (x > 0.0 || (!positive && x == 0.0)) => Some(x),
            Some(x) => {
                self.err(path, format!("must be {}, got {x}", if positive { "> 0" } else { "≥ 0" }));
                None
            }
            None => {
                self.err(path, format!("expected a number, got {}", kind(v)));
                None
            }
        }
    }

    fn integer(&mut self, path: &str, v: &Value) -> Option<u64> {
        let r = v.as_u64();
        if r.is_none() {
            self.err(path, format!("expected a nonnegative integer, got {v}"));
        }
        r
    }

    fn boolean(&mut self, path: &str, v: &Value) -> Option<bool> {
        let r = v.as_bool();
        if r.is_none() {
            self.err(path, format!("expected true or false, got {}", kind(v)));
        }
        r
    }

    fn choice<T: Copy>(&mut self, path: &str, v: &Value, options: &[(&str, T)]) -> Option<T> {
        let found = v.as_str().and_then(|s| options.iter().find(|o| o.0 == s).map(|o| o.1));
        if found.is_none() {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            self.err(path, format!("expected one of {}, got {v}", names.join(", ")));
        }
        found
    }

    fn profile(&mut self, path: &str, v: &Value, extra: &[&str]) -> Option<NodePowerProfile> {
        let Some(obj) = v.as_object() else {
            self.err(path, format!("expected an object with rho, listen_cost, transmit_cost, got {}", kind(v)));
            return None;
        };
        let mut allowed = vec!["rho", "listen_cost", "transmit_cost"];
        allowed.extend_from_slice(extra);
        self.unknown_keys(path, obj, &allowed);
        let mut vals = [0.0; 3];
        let mut ok = true;
        for (slot, key) in vals.iter_mut().zip(["rho", "listen_cost", "transmit_cost"]) {
            let p = child(path, key);
            match obj.get(key) {
                Some(x) => match self.quantity(&p, x, Dimension::Power, true) {
                    Some(q) => *slot = q,
                    None => ok = false,
                },
                None => {
                    self.err(&p, format!("missing required field \"{key}\""));
                    ok = false;
                }
            }
        }
        ok.then(|| NodePowerProfile::new(vals[0], vals[1], vals[2]))
    }

    fn network(&mut self, path: &str, obj: &Map<String, Value>) -> Option<NetworkConfig> {
        self.unknown_keys(path, obj, &["nodes", "homogeneous", "topology"]);
        let topo_path = child(path, "topology");
        let topology = match obj.get("topology") {
            None => None,
            Some(t) => Some(self.topology(&topo_path, t)?),
        };
        // Bare "clique" takes its size from the node list.
        let topology = topology.filter(|t| *t != Topology::Clique(usize::MAX));
        let nodes = match (obj.get("nodes"), obj.get("homogeneous")) {
            (Some(_), Some(_)) => {
                self.err(path, "give either \"nodes\" or \"homogeneous\", not both");
                return None;
            }
            (None, None) => {
                self.err(path, "missing \"nodes\" (a list of power profiles) or \"homogeneous\"");
                return None;
            }
            (Some(list), None) => {
                let p = child(path, "nodes");
                let Some(arr) = list.as_array() else {
                    self.err(&p, format!("expected an array, got {}", kind(list)));
                    return None;
                };
                if arr.is_empty() {
                    self.err(&p, "network needs at least one node");
                }
                let profiles: Vec<_> = arr.iter().enumerate().map(|(i, v)| self.profile(&child(&p, &i.to_string()), v, &[])).collect();
                profiles.into_iter().collect::<Option<Vec<_>>>()?
            }
            (None, Some(h)) => {
                let p = child(path, "homogeneous");
                let profile = self.profile(&p, h, &["count"]);
                let count = match h.get("count") {
                    Some(c) => self.integer(&child(&p, "count"), c).map(|c| c as usize),
                    None => match &topology {
                        Some(t) => Some(t.node_count()),
                        None => {
                            self.err(&p, "missing \"count\" (required unless a topology fixes the node count)");
                            None
                        }
                    },
                };
                if count == Some(0) {
                    self.err(&child(&p, "count"), "network needs at least one node");
                }
                vec![profile?; count?]
            }
        };
        let n = nodes.len();
        let topology = topology.unwrap_or(Topology::Clique(n));
        if topology.node_count() != n {
            self.err(&topo_path, format!("topology has {} nodes but {n} power profiles were given", topology.node_count()));
            return None;
        }
        let cfg = NetworkConfig { nodes, topology };
        if let Err(e) = cfg.validate() {
            self.err(path, e.to_string());
            return None;
        }
        Some(cfg)
    }

    fn topology(&mut self, path: &str, v: &Value) -> Option<Topology> {
        if v.as_str() == Some("clique") {
            return Some(Topology::Clique(usize::MAX));
        }
        let usage = "expected \"clique\", {\"clique\": n}, {\"grid\": [rows, cols]} or {\"adjacency\": [[...]]}";
        let Some(obj) = v.as_object().filter(|o| o.len() == 1) else {
            self.err(path, format!("{usage}, got {v}"));
            return None;
        };
        let (key, inner) = obj.iter().next().expect("one entry");
        let p = child(path, key);
        match key.as_str() {
            "clique" => self.integer(&p, inner).map(|n| Topology::Clique(n as usize)),
            "grid" => {
                let dims: Option<Vec<u64>> = inner.as_array().filter(|a| a.len() == 2).map(|a| a.iter().filter_map(Value::as_u64).collect());
                match dims {
                    Some(d) if d.len() == 2 && d[0] > 0 && d[1] > 0 => Some(Topology::grid(d[0] as usize, d[1] as usize)),
                    _ => {
                        self.err(&p, format!("expected [rows, cols] with positive integers, got {inner}"));
                        None
                    }
                }
            }
            "adjacency" | "graph" => {
                let rows = if key == "graph" { inner.get("adjacency") } else { Some(inner) };
                let parsed: Option<Vec<Vec<bool>>> = rows.and_then(Value::as_array).and_then(|rows| {
                    rows.iter()
                        .map(|r| r.as_array()?.iter().map(|x| x.as_bool().or_else(|| x.as_u64().filter(|&b| b <= 1).map(|b| b == 1))).collect())
                        .collect()
                });
                let Some(adjacency) = parsed else {
                    self.err(&p, "expected a square matrix of booleans or 0/1");
                    return None;
                };
                let t = Topology::Graph { adjacency };
                if let Err(e) = t.validate() {
                    self.err(&p, e.to_string());
                    return None;
                }
                Some(t)
            }
            _ => {
                self.err(&p, format!("{usage}, got key \"{key}\""));
                None
            }
        }
    }

    fn multipliers(&mut self, path: &str, v: &Value) -> Option<Multipliers> {
        let arr = v.as_array().or_else(|| v.get("eta").and_then(Value::as_array));
        let Some(arr) = arr else {
            self.err(path, format!("expected an array of multipliers in 1/W, got {}", kind(v)));
            return None;
        };
        let eta: Vec<Option<f64>> = arr.iter().enumerate().map(|(i, x)| self.number(&child(path, &i.to_string()), x, false)).collect();
        Some(Multipliers { eta: eta.into_iter().collect::<Option<Vec<_>>>()? })
    }

    fn simulation(&mut self, obj: &Map<String, Value>) -> Option<SimConfig> {
        const KEYS: &[&str] = &[
            "network", "sigma", "variant", "mode", "duration", "seed", "packet_length", "delta", "tau", "step_schedule",
            "estimator", "ping_interval", "ping_length", "ping_wait_as_listen", "freeze_multipliers", "initial_multipliers",
            "warmup", "max_events", "phase_offsets", "battery_clamp", "collect_occupancy",
        ];
        self.unknown_keys("", obj, KEYS);
        let network = match obj.get("network") {
            Some(Value::Object(n)) => self.network("/network", n),
            Some(other) => {
                self.err("/network", format!("expected an object, got {}", kind(other)));
                None
            }
            None => None,
        };
        for key in ["sigma", "duration"] {
            if !obj.contains_key(key) {
                self.err("", format!("missing required field \"{key}\""));
            }
        }
        let mut c = SimConfig::new(NetworkConfig::clique(Vec::new()), 1.0, 1.0);
        for (key, v) in obj {
            let p = child("", key);
            let p = p.as_str();
            match key.as_str() {
                "sigma" => c.sigma = self.number(p, v, true).unwrap_or(c.sigma),
                "delta" => c.delta = self.number(p, v, false).unwrap_or(c.delta),
                "duration" => c.duration = self.quantity(p, v, Dimension::Time, true).unwrap_or(c.duration),
                "packet_length" => c.packet_length = self.quantity(p, v, Dimension::Time, true).unwrap_or(c.packet_length),
                "tau" => c.tau = self.quantity(p, v, Dimension::Time, true).unwrap_or(c.tau),
                "ping_interval" => c.ping_interval = self.quantity(p, v, Dimension::Time, true).unwrap_or(c.ping_interval),
                "ping_length" => c.ping_length = self.quantity(p, v, Dimension::Time, true).unwrap_or(c.ping_length),
                "warmup" => c.warmup = self.quantity(p, v, Dimension::Time, false).unwrap_or(c.warmup),
                "seed" => c.seed = self.integer(p, v).unwrap_or(c.seed),
                "max_events" if !v.is_null() => c.max_events = self.integer(p, v).or(c.max_events),
                "variant" => {
                    let opts = [("capture", ProtocolVariant::Capture), ("non_capture", ProtocolVariant::NonCapture), ("noncapture", ProtocolVariant::NonCapture)];
                    c.variant = self.choice(p, v, &opts).unwrap_or(c.variant);
                }
                "mode" => c.mode = self.choice(p, v, &[("groupput", ThroughputMode::Groupput), ("anyput", ThroughputMode::Anyput)]).unwrap_or(c.mode),
                "estimator" => {
                    let opts = [("perfect", Estimator::Perfect), ("ping", Estimator::PingBased), ("ping_based", Estimator::PingBased)];
                    c.estimator = self.choice(p, v, &opts).unwrap_or(c.estimator);
                }
                "step_schedule" => {
                    let opts = [("constant", StepSchedule::Constant), ("decreasing", StepSchedule::Decreasing)];
                    c.step_schedule = self.choice(p, v, &opts).unwrap_or(c.step_schedule);
                }
                "ping_wait_as_listen" => c.ping_wait_as_listen = self.boolean(p, v).unwrap_or(c.ping_wait_as_listen),
                "collect_occupancy" => c.collect_occupancy = self.boolean(p, v).unwrap_or(c.collect_occupancy),
                "freeze_multipliers" if !v.is_null() => c.freeze_multipliers = self.multipliers(p, v),
                "initial_multipliers" if !v.is_null() => c.initial_multipliers = self.multipliers(p, v),
                "phase_offsets" if !v.is_null() => match v.as_array() {
                    Some(a) => {
                        let offs: Vec<Option<f64>> =
                            a.iter().enumerate().map(|(i, x)| self.quantity(&child(p, &i.to_string()), x, Dimension::Time, false)).collect();
                        c.phase_offsets = offs.into_iter().collect();
                    }
                    None => self.err(p, format!("expected an array of times, got {}", kind(v))),
                },
                "battery_clamp" if !v.is_null() => match v.as_array().filter(|a| a.len() == 2) {
                    Some(a) => {
                        let lo = parse_quantity(&a[0], Dimension::Energy).map_err(|m| self.err(&child(p, "0"), m)).ok();
                        let hi = parse_quantity(&a[1], Dimension::Energy).map_err(|m| self.err(&child(p, "1"), m)).ok();
                        if let (Some(lo), Some(hi)) = (lo, hi) {
                            c.battery_clamp = Some((lo, hi));
                        }
                    }
                    None => self.err(p, "expected [floor, ceiling] in joules"),
                },
                _ => {}
            }
        }
        let network = network?;
        c.network = network;
        if !self.diags.is_empty() {
            return None;
        }
        for v in c.violations() {
            let field = v.split_whitespace().next().unwrap_or("");
            let path = if obj.contains_key(field) { child("", field) } else { String::new() };
            self.err(&path, v);
        }
        Some(c)
    }
}

/// Line and column (1-based) of every value in a JSON document, keyed by JSON pointer.
fn locate(text: &str) -> HashMap<String, (usize, usize)> {
    let mut s = Scanner { chars: text.chars().collect(), i: 0, line: 1, col: 1, out: HashMap::new() };
    s.value(String::new());
    s.out
}

struct Scanner {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
    out: HashMap<String, (usize, usize)>,
}

impl Scanner {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn string(&mut self) -> String {
        let mut s = String::new();
        self.bump();
        while let Some(c) = self.bump() {
            match c {
                '"' => break,
                '\\' => {
                    if let Some(e) = self.bump() {
                        s.push(e);
                    }
                }
                c => s.push(c),
            }
        }
        s
    }

    fn value(&mut self, path: String) {
        self.ws();
        self.out.insert(path.clone(), (self.line, self.col));
        match self.peek() {
            Some('{') => {
                self.bump();
                loop {
                    self.ws();
                    match self.peek() {
                        Some('"') => {
                            let key = self.string();
                            self.ws();
                            self.bump();
                            self.value(child(&path, &key));
                        }
                        Some(',') => {
                            self.bump();
                        }
                        Some('}') | None => {
                            self.bump();
                            break;
                        }
                        Some(_) => {
                            self.bump();
                        }
                    }
                }
            }
            Some('[') => {
                self.bump();
                let mut k = 0;
                loop {
                    self.ws();
                    match self.peek() {
                        Some(']') | None => {
                            self.bump();
                            break;
                        }
                        Some(',') => {
                            self.bump();
                        }
                        Some(_) => {
                            self.value(child(&path, &k.to_string()));
                            k += 1;
                        }
                    }
                }
            }
            Some('"') => {
                self.string();
            }
            _ => {
                while self.peek().is_some_and(|c| !matches!(c, ',' | '}' | ']') && !c.is_whitespace()) {
                    self.bump();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_suffixes() {
        assert_eq!(parse_quantity(&Value::from("10uW"), Dimension::Power).unwrap(), 1e-5);
        assert_eq!(parse_quantity(&Value::from("0.5 mW"), Dimension::Power).unwrap(), 0.5e-3);
        assert_eq!(parse_quantity(&Value::from("8ms"), Dimension::Time).unwrap(), 8e-3);
        assert_eq!(parse_quantity(&Value::from("2min"), Dimension::Time).unwrap(), 120.0);
        assert_eq!(parse_quantity(&Value::from(3.5), Dimension::Time).unwrap(), 3.5);
        assert!(parse_quantity(&Value::from("10uJ"), Dimension::Power).is_err());
        assert!(parse_quantity(&Value::from("muW"), Dimension::Power).is_err());
    }

    #[test]
    fn homogeneous_grid_shorthand() {
        let cfg = parse_config(r#"{"homogeneous": {"rho": "10uW", "listen_cost": "500uW", "transmit_cost": "0.5mW"}, "topology": {"grid": [3, 3]}}"#).unwrap();
        let net = cfg.network();
        assert_eq!(net.len(), 9);
        assert_eq!(net.nodes[0].rho, 1e-5);
        assert!((0..9).all(|i| net.topology.neighbors(i).len() <= 4));
        assert_eq!(net.topology.neighbors(4), vec![1, 3, 5, 7]);
    }

    #[test]
    fn negative_cost_names_field_and_line() {
        let text = "{\n  \"nodes\": [\n    {\"rho\": \"10uW\", \"listen_cost\": \"-1mW\", \"transmit_cost\": \"1mW\"}\n  ]\n}";
        let ConfigError::Invalid(d) = parse_config(text).unwrap_err() else { panic!() };
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "/nodes/0/listen_cost");
        assert_eq!(d[0].line, 3);
        assert!(d[0].message.contains("> 0"));
    }

    #[test]
    fn every_violation_listed() {
        let text = r#"{"network": {"nodes": [{"rho": 1, "listen_cost": 0, "transmit_cost": "x"}]}, "sigma": -1, "bogus": 1}"#;
        let ConfigError::Invalid(d) = parse_config(text).unwrap_err() else { panic!() };
        let paths: Vec<&str> = d.iter().map(|d| d.path.as_str()).collect();
        for want in ["/bogus", "/network/nodes/0/listen_cost", "/network/nodes/0/transmit_cost", "/sigma", ""] {
            assert!(paths.contains(&want), "{want} missing from {paths:?}");
        }
    }

    #[test]
    fn syntax_error_has_position() {
        assert!(matches!(parse_config("{\n \"nodes\": [,]\n}"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn normalized_output_round_trips() {
        let text = r#"{"network": {"homogeneous": {"count": 3, "rho": "10uW", "listen_cost": "0.5mW", "transmit_cost": "0.5mW"}},
            "sigma": 0.5, "duration": "2h", "ping_interval": "8ms", "estimator": "ping", "battery_clamp": ["-1mJ", "1J"]}"#;
        let a = parse_config(text).unwrap();
        let sim = a.simulation().unwrap();
        assert_eq!(sim.duration, 7200.0);
        assert_eq!(sim.estimator, Estimator::PingBased);
        let b = parse_config(&a.to_json().to_string()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_field_checks_run() {
        let text = r#"{"network": {"homogeneous": {"count": 2, "rho": 1, "listen_cost": 2, "transmit_cost": 2}}, "sigma": 1, "duration": 10, "warmup": 20}"#;
        let ConfigError::Invalid(d) = parse_config(text).unwrap_err() else { panic!() };
        assert_eq!(d[0].path, "/warmup");
    }
}
