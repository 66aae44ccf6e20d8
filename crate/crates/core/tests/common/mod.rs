//! Test support shared by the integration targets: a naive reference matcher
//! and a random order-stream generator.

#![allow(dead_code)]

use marketforge::market::{Execution, Market, MarketError, Order, OrderKind, Side, Ticks};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub const TICK: f64 = 1e-5;

/// One step's worth of orders, with the execution flag for that step.
#[derive(Debug, Clone)]
pub struct StreamStep {
    pub execution_enabled: bool,
    pub orders: Vec<Order>,
}

/// Random stream of at most `max_orders` orders spread over steps. Prices sit
/// in a narrow band around 300 so that books cross often; some streams start
/// with a few steps of disabled execution.
pub fn random_stream(seed: u64, max_orders: usize) -> Vec<StreamStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = rng.random_range(1..=max_orders);
    let quiet_steps = if rng.random_bool(0.2) { rng.random_range(1..5) } else { 0 };
    let mut steps = Vec::new();
    let mut id = 0u64;
    let mut step = 0u64;
    while id < total as u64 {
        let n = rng.random_range(0..=4).min(total - id as usize);
        let mut orders = Vec::with_capacity(n);
        for _ in 0..n {
            let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
            let kind = if rng.random_bool(0.2) { OrderKind::Market } else { OrderKind::Limit };
            let price = (kind == OrderKind::Limit).then(|| 30_000_000 + rng.random_range(-20..=20));
            let ttl = if rng.random_bool(0.5) { Some(rng.random_range(1..=10)) } else { None };
            orders.push(Order {
                id,
                agent_id: rng.random_range(0..10),
                market_id: 0,
                side,
                kind,
                price,
                volume: rng.random_range(1..=5),
                placed_at: step,
                ttl,
            });
            id += 1;
        }
        steps.push(StreamStep {
            execution_enabled: step >= quiet_steps,
            orders,
        });
        step += 1;
    }
    steps
}

/// Outcome of one order: its fills, or the rejection.
pub type Outcome = Result<Vec<Execution>, MarketError>;

/// Replays a stream through the real engine. Returns per-order outcomes and
/// the resting orders left at the end, sorted by id.
pub fn replay_engine(stream: &[StreamStep]) -> (Vec<Outcome>, Vec<Order>) {
    let mut m = Market::new(0, "M", TICK, 300.0, 300.0).unwrap();
    let mut out = Vec::new();
    for (t, s) in stream.iter().enumerate() {
        for o in &s.orders {
            out.push(m.submit_order(o.clone(), s.execution_enabled));
        }
        m.expire_orders(t as u64 + 1);
        m.step_summary("s");
    }
    let mut rest: Vec<Order> = m
        .book()
        .side_orders(Side::Buy)
        .into_iter()
        .chain(m.book().side_orders(Side::Sell))
        .cloned()
        .collect();
    rest.sort_by_key(|o| o.id);
    (out, rest)
}

/// Reference matcher: a flat list scanned in full for every fill.
#[derive(Default)]
pub struct NaiveBook {
    resting: Vec<Order>,
}

impl NaiveBook {
    fn best(&self, side: Side) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.resting.iter().enumerate() {
            if o.side != side {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (p, q) = (o.price.unwrap(), self.resting[b].price.unwrap());
                    let price_better = match side {
                        Side::Buy => p > q,
                        Side::Sell => p < q,
                    };
                    price_better || (p == q && o.id < self.resting[b].id)
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    pub fn submit(&mut self, order: Order, enabled: bool, step: u64) -> Outcome {
        let opposite = order.side.opposite();
        if order.kind == OrderKind::Market {
            if !enabled {
                return Err(MarketError::MarketOrderWhileExecutionDisabled);
            }
            if self.best(opposite).is_none() {
                return Err(MarketError::MarketOrderNoCounterparty);
            }
        }
        if !enabled {
            self.resting.push(order);
            return Ok(Vec::new());
        }
        let mut incoming = order;
        let mut fills = Vec::new();
        while incoming.volume > 0 {
            let Some(b) = self.best(opposite) else { break };
            let level: Ticks = self.resting[b].price.unwrap();
            let crosses = match (incoming.kind, incoming.side) {
                (OrderKind::Market, _) => true,
                (OrderKind::Limit, Side::Buy) => incoming.price.unwrap() >= level,
                (OrderKind::Limit, Side::Sell) => incoming.price.unwrap() <= level,
            };
            if !crosses {
                break;
            }
            let v = incoming.volume.min(self.resting[b].volume);
            let r = &self.resting[b];
            let (buy, sell) = if incoming.side == Side::Buy { (&incoming, r) } else { (r, &incoming) };
            fills.push(Execution {
                market_id: 0,
                buy_order_id: buy.id,
                sell_order_id: sell.id,
                buy_agent_id: buy.agent_id,
                sell_agent_id: sell.agent_id,
                price: level,
                volume: v,
                step,
            });
            incoming.volume -= v;
            self.resting[b].volume -= v;
            if self.resting[b].volume == 0 {
                self.resting.remove(b);
            }
        }
        if incoming.volume > 0 && incoming.kind == OrderKind::Limit {
            self.resting.push(incoming);
        }
        Ok(fills)
    }

    pub fn expire(&mut self, now: u64) {
        self.resting.retain(|o| o.ttl.is_none_or(|ttl| o.placed_at + ttl > now));
    }
}

pub fn replay_reference(stream: &[StreamStep]) -> (Vec<Outcome>, Vec<Order>) {
    let mut book = NaiveBook::default();
    let mut out = Vec::new();
    for (t, s) in stream.iter().enumerate() {
        for o in &s.orders {
            out.push(book.submit(o.clone(), s.execution_enabled, t as u64));
        }
        book.expire(t as u64 + 1);
    }
    let mut rest = book.resting;
    rest.sort_by_key(|o| o.id);
    (out, rest)
}
