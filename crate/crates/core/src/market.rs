//! Continuous double auction market.
//!
//! Prices inside the book are integer tick counts. Currency values only show
//! up at the edges (agent pricing, logs). Resting orders sit in per-price FIFO
//! queues, so price-time priority is "best price first, then lowest order id".

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Ticks = i64;
pub type OrderId = u64;
pub type AgentId = usize;
pub type MarketId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("price {0} is not positive")]
    NonPositivePrice(f64),
    #[error("price {0} is not finite or exceeds the tick range")]
    UnrepresentablePrice(f64),
    #[error("market order has no counterparty")]
    MarketOrderNoCounterparty,
    #[error("market orders are rejected while execution is disabled")]
    MarketOrderWhileExecutionDisabled,
    #[error("invalid order {id}: {reason}")]
    InvalidOrder { id: OrderId, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub agent_id: AgentId,
    pub market_id: MarketId,
    pub side: Side,
    pub kind: OrderKind,
    /// Limit price in ticks; `None` for market orders.
    pub price: Option<Ticks>,
    pub volume: u64,
    pub placed_at: u64,
    pub ttl: Option<u64>,
}

impl Order {
    fn validate(&self, market_id: MarketId) -> Result<(), MarketError> {
        let fail = |reason| Err(MarketError::InvalidOrder { id: self.id, reason });
        if self.market_id != market_id {
            return fail("order routed to the wrong market");
        }
        if self.volume == 0 {
            return fail("volume must be at least 1");
        }
        match (self.kind, self.price) {
            (OrderKind::Limit, Some(p)) if p >= 1 => Ok(()),
            (OrderKind::Limit, _) => fail("limit orders need a price of at least one tick"),
            (OrderKind::Market, None) => Ok(()),
            (OrderKind::Market, Some(_)) => fail("market orders carry no price"),
        }
    }

    fn expired(&self, now: u64) -> bool {
        self.ttl.is_some_and(|ttl| self.placed_at + ttl <= now)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub market_id: MarketId,
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
    pub buy_agent_id: AgentId,
    pub sell_agent_id: AgentId,
    pub price: Ticks,
    pub volume: u64,
    pub step: u64,
}

/// Rounds a currency price onto the tick grid: buys round down, sells round up.
///
/// Values within a few ulps of a grid point count as on the grid, so exact
/// multiples like `300.0` with a `1e-5` tick stay fixed.
pub fn quantize_price(raw: f64, side: Side, tick_size: f64) -> Result<Ticks, MarketError> {
    if raw.is_nan() || raw <= 0.0 {
        return Err(MarketError::NonPositivePrice(raw));
    }
    let q = raw / tick_size;
    if !q.is_finite() || q >= i64::MAX as f64 / 2.0 {
        return Err(MarketError::UnrepresentablePrice(raw));
    }
    let nearest = q.round();
    let tol = (q.abs() * 4.0 * f64::EPSILON).max(1e-9);
    let ticks = if (q - nearest).abs() <= tol {
        nearest
    } else {
        match side {
            Side::Buy => q.floor(),
            Side::Sell => q.ceil(),
        }
    };
    Ok((ticks as Ticks).max(1))
}

/// Number of decimals needed to print multiples of `tick_size` exactly, with
/// the tick expressed as an integer count of that decimal unit.
fn decimal_scale(tick_size: f64) -> Option<(u32, i128)> {
    (0..=15u32).find_map(|k| {
        let scaled = tick_size * 10f64.powi(k as i32);
        let r = scaled.round();
        (r >= 1.0 && (scaled - r).abs() <= 1e-9 * r).then_some((k, r as i128))
    })
}

/// Exact decimal rendering of `ticks * tick_size`.
pub fn format_currency(ticks: Ticks, tick_size: f64) -> String {
    match decimal_scale(tick_size) {
        Some((k, unit)) => {
            let v = ticks as i128 * unit;
            if k == 0 {
                return v.to_string();
            }
            let sign = if v < 0 { "-" } else { "" };
            let v = v.unsigned_abs();
            let p = 10u128.pow(k);
            let frac = format!("{:0width$}", v % p, width = k as usize);
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                format!("{sign}{}", v / p)
            } else {
                format!("{sign}{}.{frac}", v / p)
            }
        }
        None => format!("{}", ticks as f64 * tick_size),
    }
}

/// `ticks * tick_size` as the closest `f64` to the exact decimal value.
pub fn ticks_to_currency(ticks: Ticks, tick_size: f64) -> f64 {
    format_currency(ticks, tick_size)
        .parse()
        .unwrap_or(ticks as f64 * tick_size)
}

/// Inverse of [`ticks_to_currency`] for on-grid values.
pub fn currency_to_ticks(value: f64, tick_size: f64) -> Ticks {
    (value / tick_size).round() as Ticks
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<Ticks, VecDeque<Order>>,
    asks: BTreeMap<Ticks, VecDeque<Order>>,
    with_ttl: usize,
    len: usize,
}

impl OrderBook {
    pub fn best_bid(&self) -> Option<Ticks> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.asks.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Resting orders on one side in priority order.
    pub fn side_orders(&self, side: Side) -> Vec<&Order> {
        match side {
            Side::Buy => self.bids.values().rev().flatten().collect(),
            Side::Sell => self.asks.values().flatten().collect(),
        }
    }

    fn rest(&mut self, order: Order) {
        let price = order.price.expect("resting orders are limit orders");
        if order.ttl.is_some() {
            self.with_ttl += 1;
        }
        self.len += 1;
        let levels = match order.side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        levels.entry(price).or_default().push_back(order);
    }

    /// Best resting order on `side`, if any.
    fn best_mut(&mut self, side: Side) -> Option<(Ticks, &mut VecDeque<Order>)> {
        match side {
            Side::Buy => self.bids.iter_mut().next_back().map(|(p, q)| (*p, q)),
            Side::Sell => self.asks.iter_mut().next().map(|(p, q)| (*p, q)),
        }
    }

    fn pop_front(&mut self, side: Side, price: Ticks) {
        let levels = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        if let Some(q) = levels.get_mut(&price) {
            if let Some(o) = q.pop_front() {
                self.len -= 1;
                if o.ttl.is_some() {
                    self.with_ttl -= 1;
                }
            }
            if q.is_empty() {
                levels.remove(&price);
            }
        }
    }

    fn expire(&mut self, now: u64) -> Vec<OrderId> {
        if self.with_ttl == 0 {
            return Vec::new();
        }
        let mut cancelled = Vec::new();
        for levels in [&mut self.bids, &mut self.asks] {
            levels.retain(|_, q| {
                q.retain(|o| {
                    let gone = o.expired(now);
                    if gone {
                        cancelled.push(o.id);
                    }
                    !gone
                });
                !q.is_empty()
            });
        }
        self.len -= cancelled.len();
        self.with_ttl -= cancelled.len();
        cancelled.sort_unstable();
        cancelled
    }
}

/// Per-step market record; one per (step, market).
#[derive(Debug, Clone, PartialEq)]
pub struct StepLogRecord {
    pub step: u64,
    pub session: String,
    pub market_id: MarketId,
    pub tick_size: f64,
    pub market_price: Ticks,
    pub fundamental_price: Ticks,
    pub best_bid: Option<Ticks>,
    pub best_ask: Option<Ticks>,
    pub executed_volume: u64,
    pub execution_count: u64,
}

#[derive(Debug, Clone)]
pub struct Market {
    pub id: MarketId,
    pub name: String,
    pub tick_size: f64,
    market_price: Ticks,
    fundamental_price: Ticks,
    time: u64,
    book: OrderBook,
    last_order_id: Option<OrderId>,
    step_volume: u64,
    step_count: u64,
    /// `price_series[t]` is the market price at the start of step `t`.
    price_series: Vec<Ticks>,
    /// Mid price (ticks, possibly half-integer) at the start of each step;
    /// the market price stands in when either side of the book is empty.
    mid_series: Vec<f64>,
}

impl Market {
    pub fn new(
        id: MarketId,
        name: impl Into<String>,
        tick_size: f64,
        market_price: f64,
        fundamental_price: f64,
    ) -> Result<Self, MarketError> {
        let market_price = quantize_price(market_price, Side::Buy, tick_size)?;
        let fundamental_price = quantize_price(fundamental_price, Side::Buy, tick_size)?;
        Ok(Market {
            id,
            name: name.into(),
            tick_size,
            market_price,
            fundamental_price,
            time: 0,
            book: OrderBook::default(),
            last_order_id: None,
            step_volume: 0,
            step_count: 0,
            price_series: vec![market_price],
            mid_series: vec![market_price as f64],
        })
    }

    pub fn market_price(&self) -> Ticks {
        self.market_price
    }

    pub fn fundamental_price(&self) -> Ticks {
        self.fundamental_price
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn best_bid(&self) -> Option<Ticks> {
        self.book.best_bid()
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.book.best_ask()
    }

    /// Average of the best quotes in ticks; `None` unless both sides are present.
    pub fn mid_price(&self) -> Option<f64> {
        Some((self.best_bid()? as f64 + self.best_ask()? as f64) / 2.0)
    }

    pub fn price_series(&self) -> &[Ticks] {
        &self.price_series
    }

    pub fn mid_series(&self) -> &[f64] {
        &self.mid_series
    }

    pub fn currency(&self, ticks: Ticks) -> f64 {
        ticks_to_currency(ticks, self.tick_size)
    }

    /// Submits an order. With execution enabled, the order trades against the
    /// opposite side while it crosses, each fill at the resting price. Limit
    /// remainders rest; market remainders are dropped.
    pub fn submit_order(&mut self, order: Order, execution_enabled: bool) -> Result<Vec<Execution>, MarketError> {
        order.validate(self.id)?;
        if self.last_order_id.is_some_and(|last| order.id <= last) {
            return Err(MarketError::InvalidOrder {
                id: order.id,
                reason: "order ids must increase",
            });
        }
        let opposite_empty = match order.side {
            Side::Buy => self.book.best_ask().is_none(),
            Side::Sell => self.book.best_bid().is_none(),
        };
        if order.kind == OrderKind::Market {
            if !execution_enabled {
                return Err(MarketError::MarketOrderWhileExecutionDisabled);
            }
            if opposite_empty {
                return Err(MarketError::MarketOrderNoCounterparty);
            }
        }
        self.last_order_id = Some(order.id);

        if !execution_enabled {
            self.book.rest(order);
            return Ok(Vec::new());
        }

        let mut incoming = order;
        let mut fills = Vec::new();
        while incoming.volume > 0 {
            let resting_side = incoming.side.opposite();
            let Some((level, queue)) = self.book.best_mut(resting_side) else {
                break;
            };
            let crosses = match (incoming.kind, incoming.price, incoming.side) {
                (OrderKind::Market, _, _) => true,
                (OrderKind::Limit, Some(p), Side::Buy) => p >= level,
                (OrderKind::Limit, Some(p), Side::Sell) => p <= level,
                (OrderKind::Limit, None, _) => false,
            };
            if !crosses {
                break;
            }
            let resting = queue.front_mut().expect("price levels are never empty");
            let volume = incoming.volume.min(resting.volume);
            let (buy, sell) = match incoming.side {
                Side::Buy => (&incoming, &*resting),
                Side::Sell => (&*resting, &incoming),
            };
            fills.push(Execution {
                market_id: self.id,
                buy_order_id: buy.id,
                sell_order_id: sell.id,
                buy_agent_id: buy.agent_id,
                sell_agent_id: sell.agent_id,
                price: level,
                volume,
                step: self.time,
            });
            resting.volume -= volume;
            incoming.volume -= volume;
            if resting.volume == 0 {
                self.book.pop_front(resting_side, level);
            }
        }
        if incoming.volume > 0 && incoming.kind == OrderKind::Limit {
            self.book.rest(incoming);
        }
        if let Some(last) = fills.last() {
            self.market_price = last.price;
        }
        self.step_volume += fills.iter().map(|f| f.volume).sum::<u64>();
        self.step_count += fills.len() as u64;
        Ok(fills)
    }

    /// Cancels resting orders whose `placed_at + ttl <= now`. Returns their ids.
    pub fn expire_orders(&mut self, now: u64) -> Vec<OrderId> {
        self.book.expire(now)
    }

    /// Closes the current step: returns its record, resets the per-step
    /// counters, extends the price and mid series and advances the clock.
    pub fn step_summary(&mut self, session: &str) -> StepLogRecord {
        let record = StepLogRecord {
            step: self.time,
            session: session.to_string(),
            market_id: self.id,
            tick_size: self.tick_size,
            market_price: self.market_price,
            fundamental_price: self.fundamental_price,
            best_bid: self.best_bid(),
            best_ask: self.best_ask(),
            executed_volume: self.step_volume,
            execution_count: self.step_count,
        };
        self.step_volume = 0;
        self.step_count = 0;
        self.price_series.push(self.market_price);
        let mid = self.mid_price().unwrap_or(self.market_price as f64);
        self.mid_series.push(mid);
        self.time += 1;
        record
    }
}
