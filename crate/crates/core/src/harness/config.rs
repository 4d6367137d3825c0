//! Plain-text scenario and sweep documents.
//!
//! Documents are TOML. Keys may be written as tables (`[grid]` then
//! `n_blocks = 200`) or dotted (`grid.n_blocks = 200`); both flatten to the
//! same dotted key. A document containing an `[axes]` table is a sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use toml::Value;

use super::HarnessError;
use crate::simcore::{
    default_warmup_s, GridShape, Policy, SimConfig, SpsAlignment, TopologySpec, VehicleCount,
};

/// Every key a scenario may set.
pub const SCENARIO_KEYS: &[&str] = &[
    "grid.n_blocks",
    "grid.blocks_per_subframe",
    "grid.period_ms",
    "topology.kind",
    "topology.n_vehicles",
    "topology.density_per_km",
    "topology.road_length_m",
    "topology.range_m",
    "protocol.sps_periods",
    "protocol.resel_prob",
    "protocol.policy",
    "protocol.sps_alignment",
    "run.duration_s",
    "run.warmup_s",
    "run.replications",
    "run.master_seed",
    "run.location_bins",
];

const SWEEP_KEYS: &[&str] = &["sweep.max_points"];

pub const DEFAULT_MAX_POINTS: usize = 10_000;

/// A scalar config value as read from a document or a `--set` override.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigValue::Int(i) => write!(f, "{i}"),
            ConfigValue::Float(x) => write!(f, "{x}"),
            ConfigValue::Str(s) => f.write_str(s),
        }
    }
}

impl ConfigValue {
    fn from_toml(key: &str, v: &Value) -> Result<Self, HarnessError> {
        match v {
            Value::Integer(i) => Ok(ConfigValue::Int(*i)),
            Value::Float(x) => Ok(ConfigValue::Float(*x)),
            Value::String(s) => Ok(ConfigValue::Str(s.clone())),
            other => Err(HarnessError::InvalidValue {
                key: key.to_string(),
                reason: format!("expected a number or string, found {}", other.type_str()),
            }),
        }
    }

    /// Parses the right-hand side of a `key=value` override.
    pub fn parse_override(text: &str) -> Self {
        let text = text.trim();
        if let Ok(i) = text.parse::<i64>() {
            ConfigValue::Int(i)
        } else if text.parse::<u64>().is_ok() {
            ConfigValue::Str(text.to_string())
        } else if let Ok(x) = text.parse::<f64>() {
            ConfigValue::Float(x)
        } else {
            ConfigValue::Str(text.trim_matches('"').to_string())
        }
    }
}

/// The explicitly set keys of a scenario. Defaults are applied only when a
/// [`SimConfig`] is built, so overrides compose without clobbering derived
/// defaults such as the warm-up length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigKeys {
    values: BTreeMap<String, ConfigValue>,
}

impl ConfigKeys {
    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.values.get(key)
    }

    /// Sets a key after checking it is known. Setting a vehicle count drops
    /// any density and vice versa.
    pub fn set(&mut self, key: &str, value: ConfigValue) -> Result<(), HarnessError> {
        if !SCENARIO_KEYS.contains(&key) {
            return Err(HarnessError::UnknownKey(key.to_string()));
        }
        match key {
            "topology.n_vehicles" => {
                self.values.remove("topology.density_per_km");
            }
            "topology.density_per_km" => {
                self.values.remove("topology.n_vehicles");
            }
            _ => {}
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| HarnessError::InvalidValue {
            key: assignment.to_string(),
            reason: "override must have the form key=value".into(),
        })?;
        self.set(key.trim(), ConfigValue::parse_override(value))
    }

    pub fn build(&self) -> Result<SimConfig, HarnessError> {
        let mut problems = Vec::new();
        let mut r = Reader {
            keys: self,
            problems: &mut problems,
        };

        let defaults = GridShape::default();
        let grid = GridShape {
            n_blocks: r.uint("grid.n_blocks").unwrap_or(defaults.n_blocks),
            blocks_per_subframe: r
                .uint("grid.blocks_per_subframe")
                .unwrap_or(defaults.blocks_per_subframe),
            period_ms: r.float("grid.period_ms").unwrap_or(defaults.period_ms),
        };
        let kind = r.string("topology.kind").unwrap_or_else(|| "fully_connected".into());
        let n_vehicles = r.uint("topology.n_vehicles");
        let density = r.float("topology.density_per_km");
        let road_length_m = r.float("topology.road_length_m").unwrap_or(3000.0);
        let range_m = r.float("topology.range_m").unwrap_or(500.0);
        let topology = match kind.as_str() {
            "fully_connected" => match n_vehicles {
                Some(n) => Some(TopologySpec::FullyConnected { n_vehicles: n }),
                None => {
                    r.problem("topology.n_vehicles is required for a fully_connected topology");
                    None
                }
            },
            "linear_road" => {
                let vehicles = match (n_vehicles, density) {
                    (Some(n), None) => Some(VehicleCount::Fixed(n)),
                    (None, Some(d)) => Some(VehicleCount::Density(d)),
                    _ => {
                        r.problem(
                            "a linear_road needs exactly one of topology.n_vehicles or topology.density_per_km",
                        );
                        None
                    }
                };
                vehicles.map(|vehicles| TopologySpec::LinearRoad {
                    vehicles,
                    road_length_m,
                    range_m,
                })
            }
            other => {
                r.problem(format!(
                    "topology.kind: unknown kind {other:?} (expected fully_connected or linear_road)"
                ));
                None
            }
        };

        let sps_periods = r.uint("protocol.sps_periods").unwrap_or(10);
        let sps_periods = u32::try_from(sps_periods).unwrap_or_else(|_| {
            r.problem("protocol.sps_periods: too large");
            1
        });
        let resel_prob = r.float("protocol.resel_prob").unwrap_or(0.2);
        let policy = r.parsed::<Policy>("protocol.policy").unwrap_or(Policy::UniformNextPeriod);
        let alignment = r
            .parsed::<SpsAlignment>("protocol.sps_alignment")
            .unwrap_or(SpsAlignment::Staggered);
        let duration_s = r.float("run.duration_s").unwrap_or(2000.0);
        let warmup_s = r
            .float("run.warmup_s")
            .unwrap_or_else(|| default_warmup_s(sps_periods.max(1), grid.period_ms));
        let replications = r.uint("run.replications").unwrap_or(10);
        let master_seed = r.seed("run.master_seed").unwrap_or(1);
        let location_bins = r.uint("run.location_bins").unwrap_or(30);

        let Some(topology) = topology else {
            return Err(HarnessError::Validation(problems));
        };
        let config = SimConfig {
            grid,
            topology,
            sps_periods,
            resel_prob,
            policy,
            alignment,
            duration_s,
            warmup_s,
            master_seed,
            replications,
            location_bins,
        };
        if let Err(e) = config.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(HarnessError::Validation(problems))
        }
    }
}

struct Reader<'a> {
    keys: &'a ConfigKeys,
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn problem(&mut self, msg: impl Into<String>) {
        self.problems.push(msg.into());
    }

    fn uint(&mut self, key: &str) -> Option<usize> {
        match self.keys.get(key)? {
            ConfigValue::Int(i) if *i >= 0 => Some(*i as usize),
            other => {
                self.problem(format!("{key}: expected a nonnegative integer, found {other}"));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.keys.get(key)? {
            ConfigValue::Int(i) => Some(*i as f64),
            ConfigValue::Float(x) => Some(*x),
            other => {
                self.problem(format!("{key}: expected a number, found {other:?}"));
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.keys.get(key)? {
            ConfigValue::Str(s) => Some(s.clone()),
            other => {
                self.problem(format!("{key}: expected a string, found {other}"));
                None
            }
        }
    }

    fn parsed<T: std::str::FromStr<Err = String>>(&mut self, key: &str) -> Option<T> {
        let s = self.string(key)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problem(format!("{key}: {e}"));
                None
            }
        }
    }

    fn seed(&mut self, key: &str) -> Option<u64> {
        match self.keys.get(key)? {
            ConfigValue::Int(i) if *i >= 0 => Some(*i as u64),
            ConfigValue::Str(s) => match s.parse::<u64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.problem(format!("{key}: {s:?} is not a 64-bit unsigned integer"));
                    None
                }
            },
            other => {
                self.problem(format!("{key}: expected a nonnegative integer, found {other}"));
                None
            }
        }
    }
}

/// One sweep dimension. A single-key axis takes one value per step; a zipped
/// axis (`"a,b" = [[a1, b1], [a2, b2]]`) moves several keys together.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub keys: Vec<String>,
    pub steps: Vec<Vec<ConfigValue>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ConfigKeys,
    pub axes: Vec<Axis>,
    pub max_points: usize,
}

/// One cartesian point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub assignments: Vec<(String, ConfigValue)>,
    pub config: SimConfig,
}

impl SweepSpec {
    /// A sweep with no axes: the base scenario alone.
    pub fn single(base: ConfigKeys) -> Self {
        Self {
            base,
            axes: Vec::new(),
            max_points: DEFAULT_MAX_POINTS,
        }
    }

    pub fn base_config(&self) -> Result<SimConfig, HarnessError> {
        self.base.build()
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.steps.len()).product()
    }

    /// Column names of the swept parameters, in axis order.
    pub fn swept_keys(&self) -> Vec<String> {
        self.axes.iter().flat_map(|a| a.keys.iter().cloned()).collect()
    }

    /// Expands the cartesian product, first axis (in document order)
    /// outermost.
    pub fn points(&self) -> Result<Vec<SweepPoint>, HarnessError> {
        let total = self.n_points();
        if total > self.max_points {
            return Err(HarnessError::Validation(vec![format!(
                "sweep has {total} points, above the cap of {}",
                self.max_points
            )]));
        }
        let mut points = Vec::with_capacity(total);
        let mut problems = Vec::new();
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; self.axes.len()];
            for (slot, axis) in idx.iter_mut().zip(&self.axes).rev() {
                *slot = rem % axis.steps.len();
                rem /= axis.steps.len();
            }
            let mut keys = self.base.clone();
            let mut assignments = Vec::new();
            for (axis, &i) in self.axes.iter().zip(&idx) {
                for (key, value) in axis.keys.iter().zip(&axis.steps[i]) {
                    keys.set(key, value.clone())?;
                    assignments.push((key.clone(), value.clone()));
                }
            }
            match keys.build() {
                Ok(config) => points.push(SweepPoint {
                    assignments,
                    config,
                }),
                Err(HarnessError::Validation(msgs)) => {
                    let at: Vec<String> = assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    problems.extend(msgs.into_iter().map(|m| format!("point [{}]: {m}", at.join(", "))));
                }
                Err(e) => return Err(e),
            }
        }
        if problems.is_empty() {
            Ok(points)
        } else {
            Err(HarnessError::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Scenario(ConfigKeys),
    Sweep(SweepSpec),
}

impl Document {
    /// Views a scenario as a single-point sweep.
    pub fn into_sweep(self) -> SweepSpec {
        match self {
            Document::Scenario(keys) => SweepSpec::single(keys),
            Document::Sweep(spec) => spec,
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<Document, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_config(&text)
}

/// Parses a scenario or sweep document, rejecting unknown keys and checking
/// every resulting configuration.
pub fn load_config(text: &str) -> Result<Document, HarnessError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
    let mut flat = Vec::new();
    flatten("", &Value::Table(table), &mut flat);

    let mut base = ConfigKeys::default();
    let mut axes = Vec::new();
    let mut max_points = DEFAULT_MAX_POINTS;
    let mut is_sweep = false;
    for (key, value) in &flat {
        if let Some(axis_key) = key.strip_prefix("axes.") {
            is_sweep = true;
            axes.push(parse_axis(axis_key, value)?);
        } else if SWEEP_KEYS.contains(&key.as_str()) {
            is_sweep = true;
            max_points = match value {
                Value::Integer(i) if *i > 0 => *i as usize,
                _ => {
                    return Err(HarnessError::InvalidValue {
                        key: key.clone(),
                        reason: "expected a positive integer".into(),
                    })
                }
            };
        } else {
            base.set(key, ConfigValue::from_toml(key, value)?)?;
        }
    }

    if is_sweep {
        let spec = SweepSpec {
            base,
            axes,
            max_points,
        };
        spec.points()?;
        Ok(Document::Sweep(spec))
    } else {
        base.build()?;
        Ok(Document::Scenario(base))
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn parse_axis(axis_key: &str, value: &Value) -> Result<Axis, HarnessError> {
    let keys: Vec<String> = axis_key.split(',').map(|k| k.trim().to_string()).collect();
    for k in &keys {
        if !SCENARIO_KEYS.contains(&k.as_str()) {
            return Err(HarnessError::UnknownKey(format!("axes.{k}")));
        }
    }
    let bad = |reason: String| HarnessError::InvalidValue {
        key: format!("axes.{axis_key}"),
        reason,
    };
    let Value::Array(items) = value else {
        return Err(bad("an axis must be an array of values".into()));
    };
    if items.is_empty() {
        return Err(bad("an axis needs at least one value".into()));
    }
    let mut steps = Vec::with_capacity(items.len());
    for item in items {
        let step = if keys.len() == 1 {
            vec![ConfigValue::from_toml(&keys[0], item)?]
        } else {
            match item {
                Value::Array(tuple) if tuple.len() == keys.len() => tuple
                    .iter()
                    .zip(&keys)
                    .map(|(v, k)| ConfigValue::from_toml(k, v))
                    .collect::<Result<_, _>>()?,
                _ => {
                    return Err(bad(format!(
                        "each step of a zipped axis must be an array of {} values",
                        keys.len()
                    )))
                }
            }
        };
        steps.push(step);
    }
    Ok(Axis { keys, steps })
}
