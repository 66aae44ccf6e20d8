//! Trader agents.
//!
//! Agents never touch the book directly. On their turn they look at the
//! markets through a [`MarketContext`] and hand back [`OrderIntent`]s; the
//! runner assigns ids, submits them and applies the resulting executions to
//! every involved [`AgentState`].

pub mod fcn;

use thiserror::Error;

use crate::config::{AgentGroupConfig, ConfigError};
use crate::deep::TrainingReport;
use crate::market::{AgentId, Execution, Market, MarketId, OrderKind, Side, Ticks};
use crate::rng::SimRng;

pub use fcn::{FcnAgent, FcnParams, PricingMode};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent {agent_id}: all factor weights sampled as zero after {attempts} attempts")]
    DegenerateWeights { agent_id: AgentId, attempts: usize },
    #[error("agent {agent_id}: parameter `{name}` = {value} is out of range ({reason})")]
    InvalidParameter {
        agent_id: AgentId,
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Cash and holdings of one agent. Cash is kept in ticks so that every
/// execution moves an exact integer amount between the two counterparties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub agent_id: AgentId,
    pub cash: i64,
    /// Position per market id (markets the agent does not trade stay at 0).
    pub positions: Vec<i64>,
    pub initial_cash: i64,
    pub initial_positions: Vec<i64>,
}

impl AgentState {
    pub fn new(agent_id: AgentId, cash: i64, positions: Vec<i64>) -> Self {
        AgentState {
            agent_id,
            cash,
            initial_cash: cash,
            initial_positions: positions.clone(),
            positions,
        }
    }

    /// Builds the starting holdings from a group block: `cashAmount` converted
    /// to ticks, `assetVolume` on each of the group's markets.
    pub fn from_group(
        agent_id: AgentId,
        group: &AgentGroupConfig,
        market_ids: &[MarketId],
        market_count: usize,
        tick_size: f64,
    ) -> Self {
        let mut positions = vec![0; market_count];
        for &m in market_ids {
            positions[m] = group.asset_volume;
        }
        let cash = (group.cash_amount / tick_size).round() as i64;
        AgentState::new(agent_id, cash, positions)
    }

    pub fn position(&self, market: MarketId) -> i64 {
        self.positions[market]
    }

    /// Position change since construction.
    pub fn net_position(&self, market: MarketId) -> i64 {
        self.positions[market] - self.initial_positions[market]
    }

    pub fn cash_currency(&self, tick_size: f64) -> f64 {
        crate::market::ticks_to_currency(self.cash, tick_size)
    }

    /// Applies one side of an execution: a buyer pays `price * volume` ticks
    /// and receives `volume` shares, a seller the reverse.
    pub fn apply_execution(&mut self, exec: &Execution, side: Side) {
        let amount = exec.price * exec.volume as i64;
        let volume = exec.volume as i64;
        match side {
            Side::Buy => {
                self.cash -= amount;
                self.positions[exec.market_id] += volume;
            }
            Side::Sell => {
                self.cash += amount;
                self.positions[exec.market_id] -= volume;
            }
        }
    }
}

/// What an agent wants to submit; the runner turns it into an `Order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderIntent {
    pub market_id: MarketId,
    pub side: Side,
    pub kind: OrderKind,
    pub price: Option<Ticks>,
    pub volume: u64,
    pub ttl: Option<u64>,
}

/// Read-only view handed to an agent on its turn.
#[derive(Debug, Clone, Copy)]
pub struct MarketContext<'a> {
    pub step: u64,
    pub markets: &'a [Market],
    pub execution_enabled: bool,
}

pub trait Agent: Send {
    fn id(&self) -> AgentId;

    /// Registry class name, e.g. `"FCNAgent"`.
    fn class_name(&self) -> &str;

    fn state(&self) -> &AgentState;

    fn state_mut(&mut self) -> &mut AgentState;

    /// Called when the runner polls this agent.
    fn submit_orders(&mut self, ctx: &MarketContext<'_>, rng: &mut SimRng) -> Vec<OrderIntent>;

    /// Bound on `|net_position|` the agent promises to respect, if any.
    fn position_bound(&self) -> Option<i64> {
        None
    }

    fn training_reports(&self) -> &[TrainingReport] {
        &[]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(price: Ticks, volume: u64) -> Execution {
        Execution {
            market_id: 0,
            buy_order_id: 1,
            sell_order_id: 2,
            buy_agent_id: 0,
            sell_agent_id: 1,
            price,
            volume,
            step: 0,
        }
    }

    #[test]
    fn buy_at_300_costs_300() {
        let tick = 1e-5;
        let mut s = AgentState::new(0, crate::market::currency_to_ticks(10_000.0, tick), vec![0]);
        s.apply_execution(&exec(30_000_000, 1), Side::Buy);
        assert_eq!(s.cash_currency(tick), 9_700.0);
        assert_eq!(s.position(0), 1);
    }

    #[test]
    fn buy_then_sell_restores_state() {
        let mut s = AgentState::new(0, 1_000_000_000, vec![50]);
        let before = s.clone();
        s.apply_execution(&exec(30_000_123, 3), Side::Buy);
        s.apply_execution(&exec(30_000_123, 3), Side::Sell);
        assert_eq!(s, before);
    }

    #[test]
    fn counterparties_mirror() {
        let mut buyer = AgentState::new(0, 500, vec![7]);
        let mut seller = AgentState::new(1, 900, vec![3]);
        let e = exec(12_345, 2);
        buyer.apply_execution(&e, Side::Buy);
        seller.apply_execution(&e, Side::Sell);
        assert_eq!(buyer.cash + seller.cash, 1_400);
        assert_eq!(buyer.positions[0] + seller.positions[0], 10);
    }
}
