//! Sequential simulation runner.
//!
//! A [`Simulator`] owns the markets, the agents and the single run stream.
//! Each step polls a random subset of agents, routes their orders to the
//! markets, settles executions into agent balances, expires stale orders and
//! closes the step on every market. Balances, the deep-agent position bound
//! and training causality are audited after every step.

use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Agent, AgentError, MarketContext};
use crate::config::{ConfigError, SessionConfig, SimulationConfig};
use crate::deep::TrainingReport;
use crate::market::{AgentId, Execution, Market, MarketError, Order, Side, StepLogRecord};
use crate::registry::{AgentBuild, ClassRegistry};
use crate::rng::{agent_child_seed, rng_from_seed, SimRng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("logger failed: {0}")]
pub struct LoggerError(pub String);

/// Why a step could not complete.
#[derive(Debug, Error)]
pub enum StepFailure {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Logger(#[from] LoggerError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("market construction failed: {0}")]
    Market(#[from] MarketError),
    #[error("cannot select {requested} agents out of {available}")]
    BadSelectionCount { requested: usize, available: usize },
    #[error("simulation aborted at step {step}: {cause}")]
    Aborted {
        step: u64,
        #[source]
        cause: StepFailure,
    },
}

/// Observer of a run. Every callback may fail, which aborts the run.
pub trait Logger {
    fn on_simulation_begin(&mut self, _sim: &Simulator) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_simulation_end(&mut self, _sim: &Simulator) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_session_begin(&mut self, _session: &SessionConfig, _step: u64) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_session_end(&mut self, _session: &SessionConfig, _step: u64) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_order(&mut self, _order: &Order) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_execution(&mut self, _execution: &Execution) -> Result<(), LoggerError> {
        Ok(())
    }
    fn on_market_step(&mut self, _record: &StepLogRecord) -> Result<(), LoggerError> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullLogger;

impl Logger for NullLogger {}

/// Keeps the per-step market records only.
#[derive(Debug, Default, Clone)]
pub struct MarketStepSaver {
    pub records: Vec<StepLogRecord>,
}

impl Logger for MarketStepSaver {
    fn on_market_step(&mut self, record: &StepLogRecord) -> Result<(), LoggerError> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Final balances of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub agent_id: AgentId,
    pub class_name: String,
    pub group: String,
    pub state: crate::agents::AgentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<StepLogRecord>,
    pub executions: Vec<Execution>,
    pub agents: Vec<AgentOutcome>,
    pub training_reports: Vec<TrainingReport>,
    /// Opening price per market, in ticks.
    pub initial_prices: Vec<i64>,
    /// Closing price per market, in ticks.
    pub final_prices: Vec<i64>,
    pub tick_size: f64,
    pub steps: u64,
}

/// Run provenance written next to the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub version: String,
    pub wall_time_secs: f64,
}

/// SHA-256 of the canonical JSON form of `config`, hex encoded.
pub fn config_digest(config: &SimulationConfig) -> String {
    let digest = Sha256::digest(config.to_json_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws `n_select` distinct agent indices out of `agent_count`, uniformly.
pub fn select_agents(rng: &mut SimRng, n_select: usize, agent_count: usize) -> Result<Vec<usize>, SimError> {
    if n_select == 0 || n_select > agent_count {
        return Err(SimError::BadSelectionCount {
            requested: n_select,
            available: agent_count,
        });
    }
    Ok(index::sample(rng, agent_count, n_select).into_vec())
}

pub struct Simulator {
    config: SimulationConfig,
    seed: u64,
    rng: SimRng,
    markets: Vec<Market>,
    agents: Vec<Box<dyn Agent>>,
    agent_groups: Vec<String>,
    step: u64,
    next_order_id: u64,
    total_cash: i64,
    total_positions: Vec<i64>,
    audited_reports: Vec<usize>,
    records: Vec<StepLogRecord>,
    executions: Vec<Execution>,
    initial_prices: Vec<i64>,
}

impl Simulator {
    pub fn new(config: &SimulationConfig, seed: u64) -> Result<Self, SimError> {
        Self::with_registry(config, seed, &ClassRegistry::with_builtins())
    }

    /// Builds markets, then agents group by group in config order. Agent
    /// parameters are sampled from the run stream.
    pub fn with_registry(config: &SimulationConfig, seed: u64, registry: &ClassRegistry) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let markets = config
            .markets
            .iter()
            .enumerate()
            .map(|(id, m)| (registry.market_class(&m.class)?.build)(m, id).map_err(SimError::from))
            .collect::<Result<Vec<_>, SimError>>()?;
        let tick_size = config.markets.first().map_or(1.0, |m| m.tick_size);
        let mut agents: Vec<Box<dyn Agent>> = Vec::with_capacity(config.total_agents());
        let mut agent_groups = Vec::with_capacity(config.total_agents());
        for group in &config.agent_groups {
            let class = registry.agent_class(&group.class)?;
            let market_ids = group
                .markets
                .iter()
                .map(|name| {
                    config.market_index(name).ok_or_else(|| ConfigError::UnknownMarket {
                        group: group.name.clone(),
                        market: name.clone(),
                    })
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            for _ in 0..group.num_agents {
                let agent_id = agents.len();
                let mut build = AgentBuild {
                    agent_id,
                    group,
                    market_ids: market_ids.clone(),
                    markets: &markets,
                    tick_size,
                    rng: &mut rng,
                    child_seed: agent_child_seed(seed, agent_id),
                };
                agents.push((class.build)(&mut build)?);
                agent_groups.push(group.name.clone());
            }
        }
        let total_cash = agents.iter().map(|a| a.state().cash).sum();
        let mut total_positions = vec![0i64; markets.len()];
        for a in &agents {
            for (t, p) in total_positions.iter_mut().zip(&a.state().positions) {
                *t += p;
            }
        }
        let initial_prices = markets.iter().map(Market::market_price).collect();
        Ok(Simulator {
            config: config.clone(),
            seed,
            rng,
            audited_reports: vec![0; agents.len()],
            markets,
            agents,
            agent_groups,
            step: 0,
            next_order_id: 0,
            total_cash,
            total_positions,
            records: Vec::new(),
            executions: Vec::new(),
            initial_prices,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn markets(&self) -> &[Market] {
        &self.markets
    }

    pub fn agents(&self) -> &[Box<dyn Agent>] {
        &self.agents
    }

    /// Runs every session in order.
    pub fn run_all(&mut self, logger: &mut dyn Logger) -> Result<(), SimError> {
        let abort = |step, e: LoggerError| SimError::Aborted { step, cause: e.into() };
        logger.on_simulation_begin(self).map_err(|e| abort(self.step, e))?;
        for i in 0..self.config.sessions.len() {
            let session = self.config.sessions[i].clone();
            self.run_session(&session, logger)?;
        }
        logger.on_simulation_end(self).map_err(|e| abort(self.step, e))
    }

    pub fn run_session(&mut self, session: &SessionConfig, logger: &mut dyn Logger) -> Result<(), SimError> {
        let abort = |step, e: LoggerError| SimError::Aborted { step, cause: e.into() };
        logger.on_session_begin(session, self.step).map_err(|e| abort(self.step, e))?;
        for _ in 0..session.iteration_steps {
            self.step(session, logger)?;
        }
        logger.on_session_end(session, self.step).map_err(|e| abort(self.step, e))
    }

    /// Advances the clock by one step.
    pub fn step(&mut self, session: &SessionConfig, logger: &mut dyn Logger) -> Result<(), SimError> {
        let step = self.step;
        self.step_inner(session, logger)
            .map_err(|cause| SimError::Aborted { step, cause })?;
        self.step += 1;
        Ok(())
    }

    fn step_inner(&mut self, session: &SessionConfig, logger: &mut dyn Logger) -> Result<(), StepFailure> {
        let n_select = self.config.num_step_agents;
        let selected = select_agents(&mut self.rng, n_select, self.agents.len())
            .map_err(|e| StepFailure::Invariant(e.to_string()))?;
        let execution_enabled = session.with_order_execution;
        for idx in selected {
            let ctx = MarketContext {
                step: self.step,
                markets: &self.markets,
                execution_enabled,
            };
            let intents = self.agents[idx].submit_orders(&ctx, &mut self.rng);
            if !session.with_order_placement {
                continue;
            }
            for intent in intents {
                let order = Order {
                    id: self.next_order_id,
                    agent_id: idx,
                    market_id: intent.market_id,
                    side: intent.side,
                    kind: intent.kind,
                    price: intent.price,
                    volume: intent.volume,
                    placed_at: self.step,
                    ttl: intent.ttl,
                };
                self.next_order_id += 1;
                logger.on_order(&order)?;
                let fills = match self.markets[order.market_id].submit_order(order, execution_enabled) {
                    Ok(fills) => fills,
                    Err(e @ (MarketError::MarketOrderNoCounterparty | MarketError::MarketOrderWhileExecutionDisabled)) => {
                        log::debug!("step {}: agent {idx} order dropped: {e}", self.step);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                self.settle(fills, logger)?;
            }
        }
        let session_name = session.name.to_string();
        for market in &mut self.markets {
            market.expire_orders(self.step + 1);
            let record = market.step_summary(&session_name);
            if session.with_print {
                log::info!(
                    "step {} session {} market {}: price {} volume {}",
                    record.step,
                    record.session,
                    market.name,
                    crate::market::format_currency(record.market_price, record.tick_size),
                    record.executed_volume
                );
            }
            logger.on_market_step(&record)?;
            self.records.push(record);
        }
        self.audit()
    }

    fn settle(&mut self, fills: Vec<Execution>, logger: &mut dyn Logger) -> Result<(), StepFailure> {
        for fill in fills {
            self.agents[fill.buy_agent_id]
                .state_mut()
                .apply_execution(&fill, Side::Buy);
            self.agents[fill.sell_agent_id]
                .state_mut()
                .apply_execution(&fill, Side::Sell);
            logger.on_execution(&fill)?;
            self.executions.push(fill);
        }
        Ok(())
    }

    /// Checks conservation, declared position bounds and that no training
    /// label looked past the current step.
    fn audit(&mut self) -> Result<(), StepFailure> {
        let mut cash = 0i64;
        let mut positions = vec![0i64; self.markets.len()];
        for (i, agent) in self.agents.iter().enumerate() {
            let state = agent.state();
            cash += state.cash;
            for (t, p) in positions.iter_mut().zip(&state.positions) {
                *t += p;
            }
            if let Some(bound) = agent.position_bound() {
                for m in 0..self.markets.len() {
                    let net = state.net_position(m);
                    if net.abs() > bound {
                        return Err(StepFailure::Invariant(format!(
                            "agent {i} net position {net} exceeds bound {bound}"
                        )));
                    }
                }
            }
            let reports = agent.training_reports();
            for r in &reports[self.audited_reports[i]..] {
                if r.max_label_step.is_some_and(|s| s as u64 > self.step) {
                    return Err(StepFailure::Invariant(format!(
                        "agent {i} trained at step {} on a label from step {:?}",
                        self.step, r.max_label_step
                    )));
                }
            }
            self.audited_reports[i] = reports.len();
        }
        if cash != self.total_cash {
            return Err(StepFailure::Invariant(format!(
                "total cash {cash} differs from initial {}",
                self.total_cash
            )));
        }
        if positions != self.total_positions {
            return Err(StepFailure::Invariant(format!(
                "total positions {positions:?} differ from initial {:?}",
                self.total_positions
            )));
        }
        Ok(())
    }

    pub fn finish(self) -> RunResult {
        let tick_size = self.markets.first().map_or(1.0, |m| m.tick_size);
        let final_prices = self.markets.iter().map(Market::market_price).collect();
        let training_reports = self
            .agents
            .iter()
            .flat_map(|a| a.training_reports().iter().cloned())
            .collect();
        let agents = self
            .agents
            .iter()
            .zip(self.agent_groups)
            .map(|(a, group)| AgentOutcome {
                agent_id: a.id(),
                class_name: a.class_name().to_string(),
                group,
                state: a.state().clone(),
            })
            .collect();
        RunResult {
            seed: self.seed,
            records: self.records,
            executions: self.executions,
            agents,
            training_reports,
            initial_prices: self.initial_prices,
            final_prices,
            tick_size,
            steps: self.step,
        }
    }
}

/// Builds a simulator from `config` and runs all sessions.
pub fn run(config: &SimulationConfig, seed: u64, logger: &mut dyn Logger) -> Result<RunResult, SimError> {
    let mut sim = Simulator::new(config, seed)?;
    sim.run_all(logger)?;
    Ok(sim.finish())
}

/// Like [`run`], also timing the run for its metadata.
pub fn run_with_metadata(
    config: &SimulationConfig,
    seed: u64,
    logger: &mut dyn Logger,
) -> Result<(RunResult, RunMetadata), SimError> {
    let start = Instant::now();
    let result = run(config, seed, logger)?;
    let meta = RunMetadata {
        seed,
        config_digest: config_digest(config),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((result, meta))
}
