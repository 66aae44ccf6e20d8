//! JSON run descriptions.
//!
//! The layout follows the PAMS convention: a `"simulation"` block lists the
//! market and agent block names plus the sessions, and every listed name has
//! its own top-level block with a `"class"` key. Numeric agent parameters may
//! be written as random entities:
//!
//! | JSON                    | [`RandomSpec`]                                   |
//! |-------------------------|--------------------------------------------------|
//! | `0.001`                 | `Constant(0.001)`                                |
//! | `[0.0, 0.1]`            | `UniformReal(0.0, 0.1)`                          |
//! | `[100, 200]`            | `UniformInt(100, 200)` on integer fields         |
//! | `{"uniform": [50, 100]}`| `UniformReal(50, 100)`                           |
//! | `{"expon": [1.0]}`      | `Exponential { mean: 1.0 }`                      |
//!
//! Unknown keys are kept in `extra` maps (so they survive a round trip) and
//! reported with a warning.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::registry::{ClassHandle, ClassRegistry};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed JSON: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("unknown class `{name}`")]
    UnknownClass { name: String },
    #[error("class `{name}` is already registered")]
    DuplicateRegistration { name: String },
    #[error("`{key}`: lower bound {lo} exceeds upper bound {hi}")]
    BadRange { key: String, lo: f64, hi: f64 },
    #[error("`{key}`: rate {value} is outside [0, 1]")]
    BadRate { key: String, value: f64 },
    #[error("agent group `{group}` references unknown market `{market}`")]
    UnknownMarket { group: String, market: String },
    #[error("`{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        reason: reason.into(),
    }
}

fn missing(key: impl Into<String>) -> ConfigError {
    ConfigError::MissingKey { key: key.into() }
}

/// A number that may be drawn at agent construction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomSpec {
    Constant(f64),
    UniformReal { lo: f64, hi: f64 },
    UniformInt { lo: i64, hi: i64 },
    /// Parameterized by its mean; a mean of 0 is the point mass at 0.
    Exponential { mean: f64 },
}

impl RandomSpec {
    /// Interprets a JSON value as a random entity. `integer` marks fields whose
    /// values are counts (a two-integer array then means an inclusive integer range).
    pub fn from_json(key: &str, value: &Value, integer: bool) -> Result<Self, ConfigError> {
        match value {
            Value::Number(_) => Ok(RandomSpec::Constant(finite(key, value)?)),
            Value::Array(items) => {
                if items.len() != 2 || !items.iter().all(Value::is_number) {
                    return Err(invalid(key, "a range must be a two-element numeric array"));
                }
                if integer && items.iter().all(|v| v.is_i64()) {
                    let lo = items[0].as_i64().unwrap_or_default();
                    let hi = items[1].as_i64().unwrap_or_default();
                    let spec = RandomSpec::UniformInt { lo, hi };
                    spec.validate(key)?;
                    Ok(spec)
                } else {
                    let spec = RandomSpec::UniformReal {
                        lo: finite(key, &items[0])?,
                        hi: finite(key, &items[1])?,
                    };
                    spec.validate(key)?;
                    Ok(spec)
                }
            }
            Value::Object(map) => {
                if map.len() != 1 {
                    return Err(invalid(key, "a random entity object must have exactly one key"));
                }
                let (kind, args) = map.iter().next().expect("one entry");
                let args = args
                    .as_array()
                    .ok_or_else(|| invalid(key, format!("`{kind}` expects an array of arguments")))?;
                let spec = match (kind.as_str(), args.len()) {
                    ("expon", 1) => RandomSpec::Exponential {
                        mean: finite(key, &args[0])?,
                    },
                    ("uniform", 2) => RandomSpec::UniformReal {
                        lo: finite(key, &args[0])?,
                        hi: finite(key, &args[1])?,
                    },
                    _ => {
                        return Err(invalid(
                            key,
                            format!("unsupported random entity `{kind}` with {} argument(s)", args.len()),
                        ))
                    }
                };
                spec.validate(key)?;
                Ok(spec)
            }
            _ => Err(invalid(key, "expected a number, a range, or a random entity")),
        }
    }

    pub fn to_json(&self) -> Value {
        match *self {
            RandomSpec::Constant(v) => json!(v),
            RandomSpec::UniformReal { lo, hi } => json!({ "uniform": [lo, hi] }),
            RandomSpec::UniformInt { lo, hi } => json!([lo, hi]),
            RandomSpec::Exponential { mean } => json!({ "expon": [mean] }),
        }
    }

    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        match *self {
            RandomSpec::Constant(v) if !v.is_finite() => Err(invalid(key, "value must be finite")),
            RandomSpec::UniformReal { lo, hi } if !(lo.is_finite() && hi.is_finite()) => {
                Err(invalid(key, "bounds must be finite"))
            }
            RandomSpec::UniformReal { lo, hi } if lo > hi => Err(ConfigError::BadRange {
                key: key.to_string(),
                lo,
                hi,
            }),
            RandomSpec::UniformInt { lo, hi } if lo > hi => Err(ConfigError::BadRange {
                key: key.to_string(),
                lo: lo as f64,
                hi: hi as f64,
            }),
            RandomSpec::Exponential { mean } if !(mean.is_finite() && mean >= 0.0) => {
                Err(invalid(key, "exponential mean must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Draws one value. Every variant except `Constant` consumes exactly one draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample(self, rng)
    }
}

/// Draws one value from `spec`.
///
/// Exponential uses inversion, `-mean * ln(1 - u)` with `u` in `[0, 1)`.
pub fn sample<R: Rng + ?Sized>(spec: &RandomSpec, rng: &mut R) -> f64 {
    match *spec {
        RandomSpec::Constant(v) => v,
        RandomSpec::UniformReal { lo, hi } => {
            let u: f64 = rng.random();
            if lo == hi {
                return lo;
            }
            let x = lo + (hi - lo) * u;
            if x >= hi {
                hi.next_down()
            } else {
                x
            }
        }
        RandomSpec::UniformInt { lo, hi } => rng.random_range(lo..=hi) as f64,
        RandomSpec::Exponential { mean } => {
            let u: f64 = rng.random();
            if mean == 0.0 {
                0.0
            } else {
                -mean * (-u).ln_1p()
            }
        }
    }
}

fn finite(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(key, "expected a finite number"))
}

/// `sessionName` may be a number or a string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SessionName {
    Number(i64),
    Text(String),
}

impl fmt::Display for SessionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionName::Number(n) => write!(f, "{n}"),
            SessionName::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub name: SessionName,
    pub iteration_steps: u64,
    pub with_order_placement: bool,
    pub with_order_execution: bool,
    pub with_print: bool,
    /// Parsed and validated; no agent in this crate consumes it.
    pub hi_frequency_submit_rate: Option<f64>,
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub name: String,
    pub class: String,
    pub tick_size: f64,
    pub market_price: f64,
    pub fundamental_price: f64,
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGroupConfig {
    pub name: String,
    pub class: String,
    pub num_agents: usize,
    pub markets: Vec<String>,
    pub asset_volume: i64,
    pub cash_amount: f64,
    /// Random-entity parameters declared by the class, defaults filled in.
    pub params: BTreeMap<String, RandomSpec>,
    /// Non-random options declared by the class, defaults filled in.
    pub options: BTreeMap<String, Value>,
    pub extra: BTreeMap<String, Value>,
}

impl AgentGroupConfig {
    pub fn param(&self, key: &str) -> Option<&RandomSpec> {
        self.params.get(key)
    }

    pub fn option(&self, key: &str) -> Option<&Value> {
        self.options.get(key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub markets: Vec<MarketConfig>,
    pub agent_groups: Vec<AgentGroupConfig>,
    pub sessions: Vec<SessionConfig>,
    /// Agents polled per step (`numStepAgents`, default 1).
    pub num_step_agents: usize,
    /// Unknown keys inside the `"simulation"` block.
    pub extra: BTreeMap<String, Value>,
    /// Unreferenced top-level blocks.
    pub extra_blocks: BTreeMap<String, Value>,
}

impl SimulationConfig {
    pub fn total_agents(&self) -> usize {
        self.agent_groups.iter().map(|g| g.num_agents).sum()
    }

    pub fn total_steps(&self) -> u64 {
        self.sessions.iter().map(|s| s.iteration_steps).sum()
    }

    pub fn market_index(&self, name: &str) -> Option<usize> {
        self.markets.iter().position(|m| m.name == name)
    }

    /// Checks the cross-block invariants. Parsing calls this; call it again after
    /// editing a config programmatically.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.markets.is_empty() {
            return Err(invalid("simulation.markets", "at least one market is required"));
        }
        if self.sessions.is_empty() {
            return Err(invalid("simulation.sessions", "at least one session is required"));
        }
        if self.agent_groups.is_empty() || self.total_agents() == 0 {
            return Err(invalid("simulation.agents", "at least one agent is required"));
        }
        if self.num_step_agents == 0 || self.num_step_agents > self.total_agents() {
            return Err(invalid(
                "simulation.numStepAgents",
                format!("must lie in [1, {}]", self.total_agents()),
            ));
        }
        let tick = self.markets[0].tick_size;
        for m in &self.markets {
            if m.tick_size != tick {
                return Err(invalid(
                    format!("{}.tickSize", m.name),
                    "all markets must share one tick size (cash is kept in ticks)",
                ));
            }
        }
        let mut names: Vec<&str> = self.markets.iter().map(|m| m.name.as_str()).collect();
        names.extend(self.agent_groups.iter().map(|g| g.name.as_str()));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(w[0], "block listed more than once"));
        }
        for g in &self.agent_groups {
            if g.num_agents == 0 {
                return Err(invalid(format!("{}.numAgents", g.name), "must be at least 1"));
            }
            if g.markets.is_empty() {
                return Err(invalid(format!("{}.markets", g.name), "must name at least one market"));
            }
            for m in &g.markets {
                if self.market_index(m).is_none() {
                    return Err(ConfigError::UnknownMarket {
                        group: g.name.clone(),
                        market: m.clone(),
                    });
                }
            }
        }
        for s in &self.sessions {
            if let Some(rate) = s.hi_frequency_submit_rate {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(ConfigError::BadRate {
                        key: format!("session {}.hiFrequencySubmitRate", s.name),
                        value: rate,
                    });
                }
            }
        }
        Ok(())
    }

    /// Serializes back into the JSON layout accepted by [`parse_config`].
    pub fn to_json(&self) -> Value {
        let mut sim = Map::new();
        sim.insert(
            "markets".into(),
            Value::Array(self.markets.iter().map(|m| json!(m.name)).collect()),
        );
        sim.insert(
            "agents".into(),
            Value::Array(self.agent_groups.iter().map(|g| json!(g.name)).collect()),
        );
        sim.insert(
            "sessions".into(),
            Value::Array(self.sessions.iter().map(session_to_json).collect()),
        );
        sim.insert("numStepAgents".into(), json!(self.num_step_agents));
        for (k, v) in &self.extra {
            sim.insert(k.clone(), v.clone());
        }

        let mut root = Map::new();
        root.insert("simulation".into(), Value::Object(sim));
        for m in &self.markets {
            let mut block = Map::new();
            block.insert("class".into(), json!(m.class));
            block.insert("tickSize".into(), json!(m.tick_size));
            block.insert("marketPrice".into(), json!(m.market_price));
            block.insert("fundamentalPrice".into(), json!(m.fundamental_price));
            for (k, v) in &m.extra {
                block.insert(k.clone(), v.clone());
            }
            root.insert(m.name.clone(), Value::Object(block));
        }
        for g in &self.agent_groups {
            let mut block = Map::new();
            block.insert("class".into(), json!(g.class));
            block.insert("numAgents".into(), json!(g.num_agents));
            block.insert("markets".into(), json!(g.markets));
            block.insert("assetVolume".into(), json!(g.asset_volume));
            block.insert("cashAmount".into(), json!(g.cash_amount));
            for (k, spec) in &g.params {
                block.insert(k.clone(), spec.to_json());
            }
            for (k, v) in g.options.iter().chain(&g.extra) {
                block.insert(k.clone(), v.clone());
            }
            root.insert(g.name.clone(), Value::Object(block));
        }
        for (k, v) in &self.extra_blocks {
            root.insert(k.clone(), v.clone());
        }
        Value::Object(root)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("config serializes")
    }
}

fn session_to_json(s: &SessionConfig) -> Value {
    let mut block = Map::new();
    block.insert("sessionName".into(), serde_json::to_value(&s.name).expect("name serializes"));
    block.insert("iterationSteps".into(), json!(s.iteration_steps));
    block.insert("withOrderPlacement".into(), json!(s.with_order_placement));
    block.insert("withOrderExecution".into(), json!(s.with_order_execution));
    block.insert("withPrint".into(), json!(s.with_print));
    if let Some(rate) = s.hi_frequency_submit_rate {
        block.insert("hiFrequencySubmitRate".into(), json!(rate));
    }
    for (k, v) in &s.extra {
        block.insert(k.clone(), v.clone());
    }
    Value::Object(block)
}

/// Parses a run description using the built-in class registry.
pub fn parse_config(json_text: &str) -> Result<SimulationConfig, ConfigError> {
    parse_config_with(json_text, &ClassRegistry::with_builtins())
}

pub fn parse_config_with(json_text: &str, registry: &ClassRegistry) -> Result<SimulationConfig, ConfigError> {
    let root: Value = serde_json::from_str(json_text)?;
    config_from_value(&root, registry)
}

pub fn config_from_value(root: &Value, registry: &ClassRegistry) -> Result<SimulationConfig, ConfigError> {
    let root = root
        .as_object()
        .ok_or_else(|| invalid("<root>", "configuration must be a JSON object"))?;
    let sim = root
        .get("simulation")
        .ok_or_else(|| missing("simulation"))?
        .as_object()
        .ok_or_else(|| invalid("simulation", "must be an object"))?;

    let market_names = string_list(sim, "simulation", "markets")?;
    let agent_names = string_list(sim, "simulation", "agents")?;
    let sessions_json = sim
        .get("sessions")
        .ok_or_else(|| missing("simulation.sessions"))?
        .as_array()
        .ok_or_else(|| invalid("simulation.sessions", "must be an array"))?;

    let num_step_agents = match sim.get("numStepAgents") {
        None => 1,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| invalid("simulation.numStepAgents", "must be a positive integer"))?
            as usize,
    };

    let mut extra = BTreeMap::new();
    for (k, v) in sim {
        if !matches!(k.as_str(), "markets" | "agents" | "sessions" | "numStepAgents") {
            log::warn!("ignoring unknown key `simulation.{k}`");
            extra.insert(k.clone(), v.clone());
        }
    }

    let markets = market_names
        .iter()
        .map(|name| parse_market(name, block(root, name)?, registry))
        .collect::<Result<Vec<_>, _>>()?;
    let agent_groups = agent_names
        .iter()
        .map(|name| parse_agent_group(name, block(root, name)?, registry))
        .collect::<Result<Vec<_>, _>>()?;
    let sessions = sessions_json
        .iter()
        .enumerate()
        .map(|(i, v)| parse_session(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut extra_blocks = BTreeMap::new();
    for (k, v) in root {
        if k != "simulation" && !market_names.contains(k) && !agent_names.contains(k) {
            log::warn!("ignoring unreferenced top-level block `{k}`");
            extra_blocks.insert(k.clone(), v.clone());
        }
    }

    let config = SimulationConfig {
        markets,
        agent_groups,
        sessions,
        num_step_agents,
        extra,
        extra_blocks,
    };
    config.validate()?;
    Ok(config)
}

fn block<'a>(root: &'a Map<String, Value>, name: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    root.get(name)
        .ok_or_else(|| missing(name))?
        .as_object()
        .ok_or_else(|| invalid(name, "block must be an object"))
}

fn string_list(map: &Map<String, Value>, path: &str, key: &str) -> Result<Vec<String>, ConfigError> {
    let full = format!("{path}.{key}");
    map.get(key)
        .ok_or_else(|| missing(&full))?
        .as_array()
        .ok_or_else(|| invalid(&full, "must be an array of names"))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| invalid(&full, "must be an array of names"))
        })
        .collect()
}

fn req<'a>(map: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, ConfigError> {
    map.get(key).ok_or_else(|| missing(format!("{path}.{key}")))
}

fn req_f64(map: &Map<String, Value>, path: &str, key: &str) -> Result<f64, ConfigError> {
    finite(&format!("{path}.{key}"), req(map, path, key)?)
}

fn req_bool(map: &Map<String, Value>, path: &str, key: &str) -> Result<bool, ConfigError> {
    req(map, path, key)?
        .as_bool()
        .ok_or_else(|| invalid(format!("{path}.{key}"), "must be a boolean"))
}

fn class_name(map: &Map<String, Value>, path: &str) -> Result<String, ConfigError> {
    req(map, path, "class")?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| invalid(format!("{path}.class"), "must be a string"))
}

fn parse_market(name: &str, map: &Map<String, Value>, registry: &ClassRegistry) -> Result<MarketConfig, ConfigError> {
    let class = class_name(map, name)?;
    match registry.resolve_class(&class)? {
        ClassHandle::Market(_) => {}
        ClassHandle::Agent(_) => {
            return Err(invalid(format!("{name}.class"), format!("`{class}` is an agent class, not a market")))
        }
    }
    let tick_size = req_f64(map, name, "tickSize")?;
    if tick_size <= 0.0 {
        return Err(invalid(format!("{name}.tickSize"), "must be positive"));
    }
    let market_price = req_f64(map, name, "marketPrice")?;
    if market_price <= 0.0 {
        return Err(invalid(format!("{name}.marketPrice"), "must be positive"));
    }
    let fundamental_price = match map.get("fundamentalPrice") {
        Some(v) => finite(&format!("{name}.fundamentalPrice"), v)?,
        None => market_price,
    };
    if fundamental_price <= 0.0 {
        return Err(invalid(format!("{name}.fundamentalPrice"), "must be positive"));
    }
    let mut extra = BTreeMap::new();
    for (k, v) in map {
        if !matches!(k.as_str(), "class" | "tickSize" | "marketPrice" | "fundamentalPrice") {
            log::warn!("ignoring unknown key `{name}.{k}`");
            extra.insert(k.clone(), v.clone());
        }
    }
    Ok(MarketConfig {
        name: name.to_string(),
        class,
        tick_size,
        market_price,
        fundamental_price,
        extra,
    })
}

const GROUP_KEYS: [&str; 5] = ["class", "numAgents", "markets", "assetVolume", "cashAmount"];

fn parse_agent_group(
    name: &str,
    map: &Map<String, Value>,
    registry: &ClassRegistry,
) -> Result<AgentGroupConfig, ConfigError> {
    let class = class_name(map, name)?;
    let decl = match registry.resolve_class(&class)? {
        ClassHandle::Agent(a) => a,
        ClassHandle::Market(_) => {
            return Err(invalid(format!("{name}.class"), format!("`{class}` is a market class, not an agent")))
        }
    };
    let num_agents = req(map, name, "numAgents")?
        .as_u64()
        .filter(|&n| n >= 1)
        .ok_or_else(|| invalid(format!("{name}.numAgents"), "must be a positive integer"))? as usize;
    let markets = string_list(map, name, "markets")?;
    let asset_volume = req(map, name, "assetVolume")?
        .as_i64()
        .ok_or_else(|| invalid(format!("{name}.assetVolume"), "must be an integer"))?;
    let cash_amount = req_f64(map, name, "cashAmount")?;

    let mut params = BTreeMap::new();
    for p in &decl.params {
        let key = format!("{name}.{}", p.name);
        let spec = match map.get(p.name) {
            Some(v) => RandomSpec::from_json(&key, v, p.integer)?,
            None => p.default.ok_or_else(|| missing(&key))?,
        };
        params.insert(p.name.to_string(), spec);
    }
    let mut options = BTreeMap::new();
    for o in &decl.options {
        let key = format!("{name}.{}", o.name);
        match map.get(o.name) {
            Some(v) => {
                (o.check)(v).map_err(|reason| invalid(&key, reason))?;
                options.insert(o.name.to_string(), v.clone());
            }
            None => {
                if let Some(d) = &o.default {
                    options.insert(o.name.to_string(), d.clone());
                }
            }
        }
    }
    let mut extra = BTreeMap::new();
    for (k, v) in map {
        let known = GROUP_KEYS.contains(&k.as_str())
            || decl.params.iter().any(|p| p.name == k)
            || decl.options.iter().any(|o| o.name == k);
        if !known {
            log::warn!("ignoring unknown key `{name}.{k}`");
            extra.insert(k.clone(), v.clone());
        }
    }
    Ok(AgentGroupConfig {
        name: name.to_string(),
        class,
        num_agents,
        markets,
        asset_volume,
        cash_amount,
        params,
        options,
        extra,
    })
}

const SESSION_KEYS: [&str; 6] = [
    "sessionName",
    "iterationSteps",
    "withOrderPlacement",
    "withOrderExecution",
    "withPrint",
    "hiFrequencySubmitRate",
];

fn parse_session(index: usize, v: &Value) -> Result<SessionConfig, ConfigError> {
    let path = format!("simulation.sessions[{index}]");
    let map = v.as_object().ok_or_else(|| invalid(&path, "session must be an object"))?;
    let name = match req(map, &path, "sessionName")? {
        Value::String(s) => SessionName::Text(s.clone()),
        v if v.is_i64() => SessionName::Number(v.as_i64().unwrap_or_default()),
        _ => return Err(invalid(format!("{path}.sessionName"), "must be a string or an integer")),
    };
    let iteration_steps = req(map, &path, "iterationSteps")?
        .as_u64()
        .ok_or_else(|| invalid(format!("{path}.iterationSteps"), "must be a non-negative integer"))?;
    let with_order_placement = req_bool(map, &path, "withOrderPlacement")?;
    let with_order_execution = req_bool(map, &path, "withOrderExecution")?;
    let with_print = match map.get("withPrint") {
        None => false,
        Some(_) => req_bool(map, &path, "withPrint")?,
    };
    let hi_frequency_submit_rate = match map.get("hiFrequencySubmitRate") {
        None => None,
        Some(v) => {
            let key = format!("{path}.hiFrequencySubmitRate");
            let rate = finite(&key, v)?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(ConfigError::BadRate { key, value: rate });
            }
            Some(rate)
        }
    };
    let mut extra = BTreeMap::new();
    for (k, v) in map {
        if !SESSION_KEYS.contains(&k.as_str()) {
            log::warn!("ignoring unknown key `{path}.{k}`");
            extra.insert(k.clone(), v.clone());
        }
    }
    Ok(SessionConfig {
        name,
        iteration_steps,
        with_order_placement,
        with_order_execution,
        with_print,
        hi_frequency_submit_rate,
        extra,
    })
}
