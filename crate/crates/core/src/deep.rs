//! The learning trader.
//!
//! A deep agent slices the recorded price and mid-price histories into
//! 100-step windows labelled by whether the price rose over the following
//! 100 steps, trains an LSTM classifier on all but the last 100 windows and
//! keeps it only if its accuracy on those last 100 exceeds 51%. Once gated it
//! trades one unit at a time with market orders, holding at most one unit
//! long or short relative to its starting inventory.

use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{Agent, AgentError, AgentState, MarketContext, OrderIntent};
use crate::market::{AgentId, Market, MarketId, OrderKind, Side, Ticks};
use crate::neural::{self, AdamConfig, NetParams, TrainConfig};
use crate::registry::{AgentBuild, AgentClass, OptionDecl};
use crate::rng::SimRng;

pub const WINDOW: usize = 100;
pub const HORIZON: usize = 100;
pub const HOLDOUT: usize = 100;
/// Fewest samples for which training is attempted.
pub const MIN_SAMPLES: usize = 150;
pub const GATE_ACCURACY: f64 = 0.51;
pub const INPUT_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepConfig {
    pub hidden: usize,
    pub train: TrainConfig,
    /// Steps between training attempts while the gate keeps failing.
    pub retrain_interval: u64,
    /// Multiplier applied to the log-ratio features.
    pub feature_scale: f64,
    pub order_style: OrderStyle,
}

/// How a deep agent expresses a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderStyle {
    /// Limit order at the current market price, resting for `ttl` steps.
    Limit { ttl: u64 },
    Market,
}

pub const DEFAULT_LIMIT_TTL: u64 = 100;

impl Default for DeepConfig {
    fn default() -> Self {
        DeepConfig {
            hidden: 32,
            train: TrainConfig::default(),
            retrain_interval: 100,
            feature_scale: 50.0,
            order_style: OrderStyle::Limit { ttl: DEFAULT_LIMIT_TTL },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `WINDOW x 2` row-major: per step `[price, mid]` as scaled log-ratios
    /// against the window's last price.
    pub features: Vec<f64>,
    pub label: f64,
    /// Index of the window's last step.
    pub anchor_step: usize,
}

impl WindowSample {
    /// Index of the price the label looks at.
    pub fn label_step(&self) -> usize {
        self.anchor_step + HORIZON
    }
}

fn window_features(prices: &[f64], mids: &[f64], end: usize, scale: f64) -> Vec<f64> {
    let p_end = prices[end];
    let start = end + 1 - WINDOW;
    let mut out = Vec::with_capacity(WINDOW * INPUT_WIDTH);
    for t in start..=end {
        out.push(scale * ((prices[t] - p_end) / p_end).ln_1p());
        out.push(scale * ((mids[t] - p_end) / p_end).ln_1p());
    }
    out
}

/// One sample per anchor with a full window behind it and a realized price
/// `HORIZON` steps ahead: `L - 199` samples for `L >= 200`. Label is 1 iff the
/// later price is strictly higher.
pub fn build_dataset(prices: &[f64], mids: &[f64], feature_scale: f64) -> Vec<WindowSample> {
    assert_eq!(prices.len(), mids.len(), "price and mid histories must be aligned");
    let len = prices.len();
    if len < WINDOW + HORIZON {
        return Vec::new();
    }
    (WINDOW - 1..len - HORIZON)
        .map(|anchor| WindowSample {
            features: window_features(prices, mids, anchor, feature_scale),
            label: if prices[anchor + HORIZON] > prices[anchor] { 1.0 } else { 0.0 },
            anchor_step: anchor,
        })
        .collect()
}

/// Features of the most recent window, or `None` with too little history.
pub fn latest_window(prices: &[f64], mids: &[f64], feature_scale: f64) -> Option<Vec<f64>> {
    (prices.len() >= WINDOW).then(|| window_features(prices, mids, prices.len() - 1, feature_scale))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub params: NetParams,
    pub holdout_accuracy: f64,
    pub gate_passed: bool,
    pub trained_at: u64,
}

impl Predictor {
    pub fn predict_up(&self, window: &[f64]) -> Result<bool, neural::NeuralError> {
        Ok(neural::predict_logit(&self.params, window)? > 0.0)
    }
}

/// One training attempt, as logged per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub agent_id: AgentId,
    pub trained_at: u64,
    pub train_size: usize,
    pub holdout_accuracy: f64,
    pub gate_passed: bool,
    /// Latest price index any training or holdout label used.
    pub max_label_step: Option<usize>,
}

/// Chronological split, train on the head, score the last `HOLDOUT`
/// samples. With fewer than `MIN_SAMPLES` nothing is trained and the gate
/// stays shut.
pub fn train_and_gate(samples: &[WindowSample], config: &DeepConfig, step: u64, rng: &mut SimRng) -> Predictor {
    let mut params = NetParams::init(INPUT_WIDTH, config.hidden, rng);
    if samples.len() < MIN_SAMPLES {
        return Predictor {
            params,
            holdout_accuracy: 0.0,
            gate_passed: false,
            trained_at: step,
        };
    }
    let split = samples.len() - HOLDOUT;
    let train: Vec<(Vec<f64>, f64)> = samples[..split]
        .iter()
        .map(|s| (s.features.clone(), s.label))
        .collect();
    let trained = neural::train(&mut params, &train, &config.train, rng).is_ok() && params.is_finite();
    let correct = if trained {
        samples[split..]
            .iter()
            .filter(|s| match neural::predict_logit(&params, &s.features) {
                Ok(z) => (z > 0.0) == (s.label > 0.5),
                Err(_) => false,
            })
            .count()
    } else {
        0
    };
    let holdout_accuracy = correct as f64 / HOLDOUT as f64;
    Predictor {
        params,
        holdout_accuracy,
        gate_passed: holdout_accuracy > GATE_ACCURACY,
        trained_at: step,
    }
}

/// Order for a predicted direction given the agent's net position.
pub fn deep_decide_order(
    predict_up: bool,
    net_position: i64,
    market_id: MarketId,
    style: OrderStyle,
    market_price: Ticks,
) -> Option<OrderIntent> {
    let side = match (predict_up, net_position) {
        (true, p) if p >= 1 => return None,
        (false, p) if p <= -1 => return None,
        (true, _) => Side::Buy,
        (false, _) => Side::Sell,
    };
    let (kind, price, ttl) = match style {
        OrderStyle::Market => (OrderKind::Market, None, None),
        OrderStyle::Limit { ttl } => (OrderKind::Limit, Some(market_price), Some(ttl)),
    };
    Some(OrderIntent {
        market_id,
        side,
        kind,
        price,
        volume: 1,
        ttl,
    })
}

pub struct DeepAgent {
    state: AgentState,
    market_id: MarketId,
    config: DeepConfig,
    rng: SimRng,
    predictor: Option<Predictor>,
    last_attempt: Option<u64>,
    reports: Vec<TrainingReport>,
    /// Resting limit order: `(expiry step, net position when placed)`.
    pending: Option<(u64, i64)>,
}

impl DeepAgent {
    pub fn new(state: AgentState, market_id: MarketId, config: DeepConfig, child_seed: u64) -> Self {
        DeepAgent {
            state,
            market_id,
            config,
            rng: SimRng::seed_from_u64(child_seed),
            predictor: None,
            last_attempt: None,
            reports: Vec::new(),
            pending: None,
        }
    }

    pub fn predictor(&self) -> Option<&Predictor> {
        self.predictor.as_ref()
    }

    fn gated(&self) -> bool {
        self.predictor.as_ref().is_some_and(|p| p.gate_passed)
    }

    fn histories(market: &Market) -> (Vec<f64>, Vec<f64>) {
        let prices = market.price_series().iter().map(|&p| p as f64).collect();
        (prices, market.mid_series().to_vec())
    }

    fn maybe_train(&mut self, step: u64, prices: &[f64], mids: &[f64]) {
        if self.gated() || prices.len() < WINDOW + HORIZON + MIN_SAMPLES - 1 {
            return;
        }
        if let Some(last) = self.last_attempt {
            if step < last + self.config.retrain_interval {
                return;
            }
        }
        self.last_attempt = Some(step);
        let samples = build_dataset(prices, mids, self.config.feature_scale);
        let predictor = train_and_gate(&samples, &self.config, step, &mut self.rng);
        log::debug!(
            "deep agent {} trained at step {} on {} samples: holdout accuracy {:.2}",
            self.state.agent_id,
            step,
            samples.len() - HOLDOUT,
            predictor.holdout_accuracy
        );
        self.reports.push(TrainingReport {
            agent_id: self.state.agent_id,
            trained_at: step,
            train_size: samples.len() - HOLDOUT,
            holdout_accuracy: predictor.holdout_accuracy,
            gate_passed: predictor.gate_passed,
            max_label_step: samples.iter().map(WindowSample::label_step).max(),
        });
        self.predictor = Some(predictor);
    }
}

impl Agent for DeepAgent {
    fn id(&self) -> AgentId {
        self.state.agent_id
    }

    fn class_name(&self) -> &str {
        "DeepAgent"
    }

    fn state(&self) -> &AgentState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut AgentState {
        &mut self.state
    }

    fn submit_orders(&mut self, ctx: &MarketContext<'_>, _rng: &mut SimRng) -> Vec<OrderIntent> {
        let market = &ctx.markets[self.market_id];
        let (prices, mids) = Self::histories(market);
        self.maybe_train(ctx.step, &prices, &mids);
        if !ctx.execution_enabled {
            return Vec::new();
        }
        let Some(predictor) = self.predictor.as_ref().filter(|p| p.gate_passed) else {
            return Vec::new();
        };
        let Some(window) = latest_window(&prices, &mids, self.config.feature_scale) else {
            return Vec::new();
        };
        let Ok(up) = predictor.predict_up(&window) else {
            return Vec::new();
        };
        let net = self.state.net_position(self.market_id);
        match self.config.order_style {
            OrderStyle::Market => {
                let counterparty = if up { market.best_ask() } else { market.best_bid() };
                if counterparty.is_none() {
                    return Vec::new();
                }
            }
            OrderStyle::Limit { ttl } => {
                // A resting order counts against the clamp until it fills or expires.
                if let Some((expires, placed_net)) = self.pending {
                    if ctx.step < expires && net == placed_net {
                        return Vec::new();
                    }
                    self.pending = None;
                }
                if deep_decide_order(up, net, self.market_id, self.config.order_style, 0).is_some() {
                    self.pending = Some((ctx.step + ttl, net));
                }
            }
        }
        deep_decide_order(up, net, self.market_id, self.config.order_style, market.market_price())
            .into_iter()
            .collect()
    }

    fn position_bound(&self) -> Option<i64> {
        Some(1)
    }

    fn training_reports(&self) -> &[TrainingReport] {
        &self.reports
    }
}

fn positive_int(v: &Value) -> Result<(), String> {
    match v.as_u64() {
        Some(n) if n > 0 => Ok(()),
        _ => Err("expected a positive integer".into()),
    }
}

fn non_negative_int(v: &Value) -> Result<(), String> {
    v.as_u64().map(|_| ()).ok_or_else(|| "expected a non-negative integer".into())
}

fn order_type(v: &Value) -> Result<(), String> {
    match v.as_str() {
        Some("limit" | "market") => Ok(()),
        _ => Err("expected \"limit\" or \"market\"".into()),
    }
}

fn positive_number(v: &Value) -> Result<(), String> {
    match v.as_f64() {
        Some(x) if x > 0.0 && x.is_finite() => Ok(()),
        _ => Err("expected a positive number".into()),
    }
}

fn non_negative_number(v: &Value) -> Result<(), String> {
    match v.as_f64() {
        Some(x) if x >= 0.0 && x.is_finite() => Ok(()),
        _ => Err("expected a non-negative number".into()),
    }
}

/// Reads the `DeepAgent` block options, falling back to defaults.
pub fn config_from_options(get: impl Fn(&str) -> Option<Value>) -> DeepConfig {
    let d = DeepConfig::default();
    let u = |k: &str, dflt: u64| get(k).and_then(|v| v.as_u64()).unwrap_or(dflt);
    let f = |k: &str, dflt: f64| get(k).and_then(|v| v.as_f64()).unwrap_or(dflt);
    DeepConfig {
        hidden: u("hiddenSize", d.hidden as u64) as usize,
        train: TrainConfig {
            epochs: u("trainingEpochs", d.train.epochs as u64) as usize,
            batch_size: u("batchSize", d.train.batch_size as u64) as usize,
            adam: AdamConfig {
                lr: f("learningRate", d.train.adam.lr),
                ..d.train.adam
            },
            early_stop_loss: f("earlyStopLoss", d.train.early_stop_loss),
        },
        retrain_interval: u("retrainInterval", d.retrain_interval),
        feature_scale: f("featureScale", d.feature_scale),
        order_style: match get("orderType").as_ref().and_then(Value::as_str) {
            Some("market") => OrderStyle::Market,
            _ => OrderStyle::Limit {
                ttl: u("limitOrderTtl", DEFAULT_LIMIT_TTL),
            },
        },
    }
}

fn build_deep(build: &mut AgentBuild<'_>) -> Result<Box<dyn Agent>, AgentError> {
    let state = AgentState::from_group(
        build.agent_id,
        build.group,
        &build.market_ids,
        build.markets.len(),
        build.tick_size,
    );
    let config = config_from_options(|k| build.group.option(k).cloned());
    Ok(Box::new(DeepAgent::new(state, build.market_ids[0], config, build.child_seed)))
}

pub(crate) fn class() -> AgentClass {
    let opt = |name, default: Value, check| OptionDecl {
        name,
        default: Some(default),
        check,
    };
    let d = DeepConfig::default();
    AgentClass {
        params: Vec::new(),
        options: vec![
            opt("hiddenSize", Value::from(d.hidden), positive_int),
            opt("trainingEpochs", Value::from(d.train.epochs), non_negative_int),
            opt("batchSize", Value::from(d.train.batch_size), positive_int),
            opt("learningRate", Value::from(d.train.adam.lr), positive_number),
            opt("earlyStopLoss", Value::from(d.train.early_stop_loss), non_negative_number),
            opt("retrainInterval", Value::from(d.retrain_interval), positive_int),
            opt("featureScale", Value::from(d.feature_scale), positive_number),
            opt("orderType", Value::from("limit"), order_type),
            opt("limitOrderTtl", Value::from(DEFAULT_LIMIT_TTL), positive_int),
        ],
        build: Arc::new(build_deep),
    }
}
