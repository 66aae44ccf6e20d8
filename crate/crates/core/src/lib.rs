//! Deterministic artificial market simulator.
//!
//! Continuous double auction markets trade integer tick prices. FCN agents
//! (fundamentalist, chartist, noise) and LSTM-driven deep agents place orders
//! in tick time. A JSON config describes markets, agent groups and sessions;
//! a run is a pure function of that config and a seed.

pub mod agents;
pub mod config;
mod dd;
pub mod deep;
pub mod experiment;
pub mod market;
pub mod neural;
pub mod registry;
pub mod rng;
pub mod sim;

pub use config::{parse_config, ConfigError, SimulationConfig};
pub use market::{Execution, Market, MarketError, Order, OrderKind, Side, StepLogRecord};
pub use sim::{run, MarketStepSaver, NullLogger, RunResult, SimError, Simulator};
