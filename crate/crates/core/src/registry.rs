//! Class registry behind the `"class"` key of config blocks.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use crate::agents::{Agent, AgentError};
use crate::config::{AgentGroupConfig, ConfigError, MarketConfig, RandomSpec};
use crate::market::{AgentId, Market, MarketError, MarketId};
use crate::rng::SimRng;

/// Everything an agent constructor may use.
pub struct AgentBuild<'a> {
    pub agent_id: AgentId,
    pub group: &'a AgentGroupConfig,
    pub market_ids: Vec<MarketId>,
    pub markets: &'a [Market],
    pub tick_size: f64,
    /// The run stream; parameter sampling draws from it.
    pub rng: &'a mut SimRng,
    /// Seed for a private generator, derived from the run seed and agent id.
    pub child_seed: u64,
}

pub type AgentFactory = Arc<dyn Fn(&mut AgentBuild<'_>) -> Result<Box<dyn Agent>, AgentError> + Send + Sync>;
pub type MarketFactory = Arc<dyn Fn(&MarketConfig, MarketId) -> Result<Market, MarketError> + Send + Sync>;

/// A random-entity parameter a class reads from its block.
#[derive(Debug, Clone, Copy)]
pub struct ParamDecl {
    pub name: &'static str,
    /// Count-valued: `[a, b]` with integer endpoints means an integer range.
    pub integer: bool,
    /// `None` makes the key required.
    pub default: Option<RandomSpec>,
}

impl ParamDecl {
    pub fn required(name: &'static str) -> Self {
        ParamDecl {
            name,
            integer: false,
            default: None,
        }
    }

    pub fn with_default(name: &'static str, default: RandomSpec) -> Self {
        ParamDecl {
            name,
            integer: false,
            default: Some(default),
        }
    }

    pub fn integer(mut self) -> Self {
        self.integer = true;
        self
    }
}

/// A plain (non-random) option a class reads from its block.
#[derive(Clone)]
pub struct OptionDecl {
    pub name: &'static str,
    pub default: Option<Value>,
    pub check: fn(&Value) -> Result<(), String>,
}

#[derive(Clone)]
pub struct AgentClass {
    pub params: Vec<ParamDecl>,
    pub options: Vec<OptionDecl>,
    pub build: AgentFactory,
}

#[derive(Clone)]
pub struct MarketClass {
    pub build: MarketFactory,
}

pub enum ClassHandle<'a> {
    Market(&'a MarketClass),
    Agent(&'a AgentClass),
}

#[derive(Clone, Default)]
pub struct ClassRegistry {
    markets: BTreeMap<String, MarketClass>,
    agents: BTreeMap<String, AgentClass>,
}

impl fmt::Debug for ClassRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassRegistry")
            .field("markets", &self.markets.keys().collect::<Vec<_>>())
            .field("agents", &self.agents.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn build_market(cfg: &MarketConfig, id: MarketId) -> Result<Market, MarketError> {
    Market::new(id, cfg.name.clone(), cfg.tick_size, cfg.market_price, cfg.fundamental_price)
}

impl ClassRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `Market`, `FCNAgent` and `DeepAgent`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register_market(
            "Market",
            MarketClass {
                build: Arc::new(build_market),
            },
        )
        .expect("fresh registry");
        r.register_agent("FCNAgent", crate::agents::fcn::class())
            .expect("fresh registry");
        r.register_agent("DeepAgent", crate::deep::class())
            .expect("fresh registry");
        r
    }

    fn check_free(&self, name: &str) -> Result<(), ConfigError> {
        if self.markets.contains_key(name) || self.agents.contains_key(name) {
            return Err(ConfigError::DuplicateRegistration { name: name.to_string() });
        }
        Ok(())
    }

    pub fn register_market(&mut self, name: &str, class: MarketClass) -> Result<(), ConfigError> {
        self.check_free(name)?;
        self.markets.insert(name.to_string(), class);
        Ok(())
    }

    pub fn register_agent(&mut self, name: &str, class: AgentClass) -> Result<(), ConfigError> {
        self.check_free(name)?;
        self.agents.insert(name.to_string(), class);
        Ok(())
    }

    pub fn resolve_class(&self, name: &str) -> Result<ClassHandle<'_>, ConfigError> {
        if let Some(m) = self.markets.get(name) {
            return Ok(ClassHandle::Market(m));
        }
        if let Some(a) = self.agents.get(name) {
            return Ok(ClassHandle::Agent(a));
        }
        Err(ConfigError::UnknownClass { name: name.to_string() })
    }

    pub fn agent_class(&self, name: &str) -> Result<&AgentClass, ConfigError> {
        match self.resolve_class(name)? {
            ClassHandle::Agent(a) => Ok(a),
            ClassHandle::Market(_) => Err(ConfigError::UnknownClass { name: name.to_string() }),
        }
    }

    pub fn market_class(&self, name: &str) -> Result<&MarketClass, ConfigError> {
        match self.resolve_class(name)? {
            ClassHandle::Market(m) => Ok(m),
            ClassHandle::Agent(_) => Err(ConfigError::UnknownClass { name: name.to_string() }),
        }
    }
}
