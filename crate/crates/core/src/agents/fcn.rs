//! Fundamentalist-chartist-noise (FCN) stylized trader.
//!
//! On each turn the agent blends three return estimates,
//!
//! ```text
//! F = ln(p* / p_t) / tau*                       fundamental
//! C = mean of the last tau log returns          chartist
//! N ~ Normal(0, sigma^2)                        noise
//! r = (w_F F + w_C C + w_N N) / (w_F + w_C + w_N)
//! p_hat = p_t exp(r tau)
//! ```
//!
//! and bids below `p_hat` when `p_hat > p_t`, asks above it when `p_hat < p_t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use super::{Agent, AgentError, AgentState, MarketContext, OrderIntent};
use crate::config::{sample, AgentGroupConfig, RandomSpec};
use crate::market::{quantize_price, AgentId, MarketId, OrderKind, Side, Ticks};
use crate::registry::{AgentBuild, AgentClass, OptionDecl, ParamDecl};
use crate::rng::SimRng;

const MAX_WEIGHT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcnParams {
    pub w_fundamental: f64,
    pub w_chart: f64,
    pub w_noise: f64,
    /// Mean-reversion time in steps.
    pub tau_star: f64,
    /// Chart window (and expectation horizon) in steps.
    pub tau: usize,
    /// Order margin.
    pub k: f64,
    /// Noise standard deviation.
    pub sigma: f64,
}

impl FcnParams {
    pub fn weight_sum(&self) -> f64 {
        self.w_fundamental + self.w_chart + self.w_noise
    }

    fn validate(&self, agent_id: AgentId) -> Result<(), AgentError> {
        let bad = |name, value, reason| {
            Err(AgentError::InvalidParameter {
                agent_id,
                name,
                value,
                reason,
            })
        };
        for (name, w) in [
            ("fundamentalWeight", self.w_fundamental),
            ("chartWeight", self.w_chart),
            ("noiseWeight", self.w_noise),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(name, w, "weights must be finite and non-negative");
            }
        }
        if !(self.tau_star >= 1.0 && self.tau_star.is_finite()) {
            return bad("meanReversionTime", self.tau_star, "must be at least 1");
        }
        if self.tau < 1 {
            return bad("timeWindowSize", self.tau as f64, "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.k) {
            return bad("orderMargin", self.k, "must lie in [0, 1)");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("noiseScale", self.sigma, "must be non-negative");
        }
        Ok(())
    }
}

/// How the limit price is derived from the expected price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PricingMode {
    /// Buy at `p_hat (1 - k)`, sell at `p_hat (1 + k)`.
    #[default]
    Uncapped,
    /// Buy at `min(p_hat (1 - k), best bid)`, sell at `max(p_hat (1 + k), best ask)`,
    /// falling back to the uncapped price when the quote is missing.
    Literal,
}

impl PricingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uncapped" => Some(PricingMode::Uncapped),
            "literal" => Some(PricingMode::Literal),
            _ => None,
        }
    }
}

/// `ln(a / b)` for positive tick counts, accurate when `a` is close to `b`.
fn log_ratio(a: Ticks, b: Ticks) -> f64 {
    ((a - b) as f64 / b as f64).ln_1p()
}

pub fn fundamental_factor(tau_star: f64, p_star: Ticks, p_t: Ticks) -> f64 {
    log_ratio(p_star, p_t) / tau_star
}

/// Mean log return over the last `min(tau, available)` steps of `history`,
/// which must end at `t - 1`. The sum of log returns telescopes to the log of
/// the end-point ratio. Zero when fewer than two prices are available.
pub fn chartist_factor(tau: usize, history: &[Ticks]) -> f64 {
    let n = history.len();
    if n < 2 || tau == 0 {
        return 0.0;
    }
    let window = tau.min(n - 1);
    log_ratio(history[n - 1], history[n - 1 - window]) / window as f64
}

pub fn noise_factor<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

pub fn expected_return(params: &FcnParams, f: f64, c: f64, n: f64) -> f64 {
    let num = params
        .w_fundamental
        .mul_add(f, params.w_chart.mul_add(c, params.w_noise * n));
    num / params.weight_sum()
}

/// `p_t exp(r_hat tau)` in currency.
pub fn expected_price(p_t: f64, r_hat: f64, tau: usize) -> f64 {
    p_t * (r_hat * tau as f64).exp()
}

/// What an FCN agent sees of one market.
#[derive(Debug, Clone, Copy)]
pub struct FcnView<'a> {
    pub market_id: MarketId,
    pub tick_size: f64,
    pub market_price: Ticks,
    pub fundamental_price: Ticks,
    pub best_bid: Option<Ticks>,
    pub best_ask: Option<Ticks>,
    /// Prices up to and including `t - 1`.
    pub history: &'a [Ticks],
}

/// Every intermediate of one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnDecision {
    pub fundamental: f64,
    pub chart: f64,
    pub noise: f64,
    pub expected_return: f64,
    /// Current price in currency.
    pub price: f64,
    /// Expected price in currency.
    pub expected_price: f64,
    pub order: Option<OrderIntent>,
}

pub fn evaluate<R: Rng + ?Sized>(
    params: &FcnParams,
    view: &FcnView<'_>,
    rng: &mut R,
    mode: PricingMode,
    ttl: Option<u64>,
) -> FcnDecision {
    let fundamental = fundamental_factor(params.tau_star, view.fundamental_price, view.market_price);
    let chart = chartist_factor(params.tau, view.history);
    let noise = noise_factor(params.sigma, rng);
    let r_hat = expected_return(params, fundamental, chart, noise);
    let price = view.market_price as f64 * view.tick_size;
    let p_hat = expected_price(price, r_hat, params.tau);

    let side = if p_hat > price {
        Some(Side::Buy)
    } else if p_hat < price {
        Some(Side::Sell)
    } else {
        None
    };
    let order = side.and_then(|side| {
        let raw = match side {
            Side::Buy => p_hat * (1.0 - params.k),
            Side::Sell => p_hat * (1.0 + params.k),
        };
        let uncapped = quantize_price(raw, side, view.tick_size).ok()?;
        let limit = match (mode, side) {
            (PricingMode::Uncapped, _) => uncapped,
            (PricingMode::Literal, Side::Buy) => view.best_bid.map_or(uncapped, |b| uncapped.min(b)),
            (PricingMode::Literal, Side::Sell) => view.best_ask.map_or(uncapped, |a| uncapped.max(a)),
        };
        Some(OrderIntent {
            market_id: view.market_id,
            side,
            kind: OrderKind::Limit,
            price: Some(limit),
            volume: 1,
            ttl,
        })
    });
    FcnDecision {
        fundamental,
        chart,
        noise,
        expected_return: r_hat,
        price,
        expected_price: p_hat,
        order,
    }
}

pub fn decide_order<R: Rng + ?Sized>(
    params: &FcnParams,
    view: &FcnView<'_>,
    rng: &mut R,
    mode: PricingMode,
    ttl: Option<u64>,
) -> Option<OrderIntent> {
    evaluate(params, view, rng, mode, ttl).order
}

/// Samples one agent's parameters from its group block, in the fixed order
/// weights, `meanReversionTime`, `noiseScale`, `timeWindowSize`, `orderMargin`.
pub fn sample_params(group: &AgentGroupConfig, agent_id: AgentId, rng: &mut SimRng) -> Result<FcnParams, AgentError> {
    let spec = |key: &str| -> Result<RandomSpec, AgentError> {
        group.param(key).copied().ok_or_else(|| {
            AgentError::Config(crate::config::ConfigError::MissingKey {
                key: format!("{}.{key}", group.name),
            })
        })
    };
    let (wf, wc, wn) = (spec("fundamentalWeight")?, spec("chartWeight")?, spec("noiseWeight")?);
    let mut weights = None;
    for _ in 0..MAX_WEIGHT_ATTEMPTS {
        let w = (sample(&wf, rng), sample(&wc, rng), sample(&wn, rng));
        if w.0 + w.1 + w.2 > 0.0 {
            weights = Some(w);
            break;
        }
    }
    let (w_fundamental, w_chart, w_noise) = weights.ok_or(AgentError::DegenerateWeights {
        agent_id,
        attempts: MAX_WEIGHT_ATTEMPTS,
    })?;
    let tau_star = sample(&spec("meanReversionTime")?, rng);
    let sigma = sample(&spec("noiseScale")?, rng);
    let tau = sample(&spec("timeWindowSize")?, rng).round();
    let k = sample(&spec("orderMargin")?, rng);
    let params = FcnParams {
        w_fundamental,
        w_chart,
        w_noise,
        tau_star,
        tau: if tau >= 1.0 { tau as usize } else { 0 },
        k,
        sigma,
    };
    params.validate(agent_id)?;
    Ok(params)
}

#[derive(Debug, Clone)]
pub struct FcnAgent {
    pub params: FcnParams,
    state: AgentState,
    markets: Vec<MarketId>,
    mode: PricingMode,
    ttl: Option<u64>,
}

impl FcnAgent {
    pub fn new(params: FcnParams, state: AgentState, markets: Vec<MarketId>, mode: PricingMode, ttl: Option<u64>) -> Self {
        FcnAgent {
            params,
            state,
            markets,
            mode,
            ttl,
        }
    }

    pub fn pricing_mode(&self) -> PricingMode {
        self.mode
    }
}

/// Samples parameters and records initial holdings for one agent of `group`.
pub fn fcn_new(build: &mut AgentBuild<'_>) -> Result<(FcnParams, AgentState), AgentError> {
    let params = sample_params(build.group, build.agent_id, build.rng)?;
    let state = AgentState::from_group(
        build.agent_id,
        build.group,
        &build.market_ids,
        build.markets.len(),
        build.tick_size,
    );
    Ok((params, state))
}

fn build_fcn(build: &mut AgentBuild<'_>) -> Result<Box<dyn Agent>, AgentError> {
    let (params, state) = fcn_new(build)?;
    let mode = build
        .group
        .option("pricingMode")
        .and_then(Value::as_str)
        .and_then(PricingMode::parse)
        .unwrap_or_default();
    let ttl = build.group.option("orderTimeToLive").and_then(Value::as_u64);
    Ok(Box::new(FcnAgent::new(params, state, build.market_ids.clone(), mode, ttl)))
}

pub(crate) fn class() -> AgentClass {
    AgentClass {
        params: vec![
            ParamDecl::required("fundamentalWeight"),
            ParamDecl::required("chartWeight"),
            ParamDecl::required("noiseWeight"),
            ParamDecl::with_default("meanReversionTime", RandomSpec::UniformReal { lo: 50.0, hi: 100.0 }),
            ParamDecl::with_default("noiseScale", RandomSpec::Constant(0.001)),
            ParamDecl::with_default("timeWindowSize", RandomSpec::UniformInt { lo: 100, hi: 200 }).integer(),
            ParamDecl::with_default("orderMargin", RandomSpec::UniformReal { lo: 0.0, hi: 0.1 }),
        ],
        options: vec![
            OptionDecl {
                name: "pricingMode",
                default: Some(Value::from("uncapped")),
                check: |v| match v.as_str().and_then(PricingMode::parse) {
                    Some(_) => Ok(()),
                    None => Err("expected \"uncapped\" or \"literal\"".into()),
                },
            },
            OptionDecl {
                name: "orderTimeToLive",
                default: None,
                check: |v| match v.as_u64() {
                    Some(_) => Ok(()),
                    None => Err("expected a non-negative integer step count".into()),
                },
            },
        ],
        build: std::sync::Arc::new(build_fcn),
    }
}

impl Agent for FcnAgent {
    fn id(&self) -> AgentId {
        self.state.agent_id
    }

    fn class_name(&self) -> &str {
        "FCNAgent"
    }

    fn state(&self) -> &AgentState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut AgentState {
        &mut self.state
    }

    fn submit_orders(&mut self, ctx: &MarketContext<'_>, rng: &mut SimRng) -> Vec<OrderIntent> {
        let market_id = if self.markets.len() == 1 {
            self.markets[0]
        } else {
            self.markets[rng.random_range(0..self.markets.len())]
        };
        let market = &ctx.markets[market_id];
        let series = market.price_series();
        let view = FcnView {
            market_id,
            tick_size: market.tick_size,
            market_price: market.market_price(),
            fundamental_price: market.fundamental_price(),
            best_bid: market.best_bid(),
            best_ask: market.best_ask(),
            history: &series[..series.len() - 1],
        };
        decide_order(&self.params, &view, rng, self.mode, self.ttl)
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::market::Market;
    use crate::rng::rng_from_seed;

    const TICK: f64 = 1e-5;

    fn ticks(p: f64) -> Ticks {
        (p / TICK).round() as Ticks
    }

    fn params(wf: f64, wc: f64, wn: f64, k: f64) -> FcnParams {
        FcnParams {
            w_fundamental: wf,
            w_chart: wc,
            w_noise: wn,
            tau_star: 75.0,
            tau: 100,
            k,
            sigma: 0.0,
        }
    }

    #[test]
    fn fundamental_examples() {
        assert_eq!(fundamental_factor(75.0, ticks(300.0), ticks(300.0)), 0.0);
        let f = fundamental_factor(75.0, ticks(300.0), ticks(310.0));
        assert!((f - (-4.3720e-4)).abs() < 5e-9, "{f}");
        let f = fundamental_factor(50.0, ticks(300.0), ticks(150.0));
        assert!((f - 2f64.ln() / 50.0).abs() < 1e-16);
    }

    #[test]
    fn fundamental_antisymmetric() {
        let a = fundamental_factor(60.0, 123_456, 98_765);
        let b = fundamental_factor(60.0, 98_765, 123_456);
        assert!((a + b).abs() <= 1e-16 * a.abs());
    }

    #[test]
    fn chartist_examples() {
        assert_eq!(chartist_factor(100, &[ticks(300.0); 50]), 0.0);
        let h = [ticks(300.0), ticks(303.0), ticks(306.03)];
        let c = chartist_factor(2, &h);
        assert!((c - 1.01f64.ln()).abs() < 1e-15);
        assert!((c - 9.9503e-3).abs() < 1e-7);
        assert_eq!(chartist_factor(5, &[]), 0.0);
        assert_eq!(chartist_factor(5, &[ticks(300.0)]), 0.0);
        // 51 prices -> 50 returns; window truncated to 50
        let h: Vec<Ticks> = (0..51).map(|i| 30_000_000 + 1000 * i).collect();
        let c = chartist_factor(200, &h);
        let expect = (h[50] as f64 / h[0] as f64).ln() / 50.0;
        assert!((c - expect).abs() < 1e-15);
    }

    #[test]
    fn noise_examples() {
        let mut rng = rng_from_seed(3);
        assert_eq!(noise_factor(0.0, &mut rng), 0.0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| noise_factor(0.001, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(((sd - 0.001) / 0.001).abs() < 0.02, "sd {sd}");
        let mut a = rng_from_seed(8);
        let mut b = rng_from_seed(8);
        assert_eq!(noise_factor(0.001, &mut a), noise_factor(0.001, &mut b));
    }

    #[test]
    fn expected_return_examples() {
        assert_eq!(expected_return(&params(1.0, 0.0, 0.0, 0.0), 0.0123, 9.0, 9.0), 0.0123);
        let r = expected_return(&params(1.0, 1.0, 0.0, 0.0), 0.002, 0.004, 0.0);
        assert!((r - 0.003).abs() < 1e-18);
        let r = expected_return(&params(0.3, 2.0, 0.7, 0.0), 0.01, 0.01, 0.01);
        assert!((r - 0.01).abs() < 1e-17);
    }

    #[test]
    fn expected_price_examples() {
        assert_eq!(expected_price(300.0, 0.0, 150), 300.0);
        let p = expected_price(300.0, 0.001, 100);
        assert!((p - 331.551_275_422_694_3).abs() < 1e-6, "{p}");
        assert!(expected_price(300.0, -1e-6, 100) < 300.0);
    }

    fn view(history: &[Ticks], bid: Option<f64>, ask: Option<f64>) -> FcnView<'_> {
        FcnView {
            market_id: 0,
            tick_size: TICK,
            market_price: ticks(300.0),
            fundamental_price: ticks(310.0),
            best_bid: bid.map(ticks),
            best_ask: ask.map(ticks),
            history,
        }
    }

    /// Pure-fundamentalist params whose expected price is exactly `p_hat`
    /// for a market at 300 and a fundamental of 310.
    fn params_for_310(k: f64) -> FcnParams {
        FcnParams {
            w_fundamental: 1.0,
            w_chart: 0.0,
            w_noise: 0.0,
            tau_star: 100.0,
            tau: 100,
            k,
            sigma: 0.0,
        }
    }

    #[test]
    fn uncapped_buy_at_margin() {
        let mut rng = rng_from_seed(0);
        let d = evaluate(&params_for_310(0.1), &view(&[], None, None), &mut rng, PricingMode::Uncapped, None);
        assert!((d.expected_price - 310.0).abs() < 1e-9);
        let o = d.order.unwrap();
        assert_eq!(o.side, Side::Buy);
        assert_eq!(o.kind, OrderKind::Limit);
        assert_eq!(o.volume, 1);
        // 310 * 0.9 = 279 up to rounding; the buy price never exceeds it
        let p = o.price.unwrap();
        assert!(p == ticks(279.0) || p == ticks(279.0) - 1, "{p}");
    }

    #[test]
    fn literal_buy_caps_at_bid() {
        let mut rng = rng_from_seed(0);
        let o = decide_order(
            &params_for_310(0.05),
            &view(&[], Some(305.0), None),
            &mut rng,
            PricingMode::Literal,
            Some(7),
        )
        .unwrap();
        let p = o.price.unwrap();
        assert!(p == ticks(294.5) || p == ticks(294.5) - 1, "{p}");
        assert_eq!(o.ttl, Some(7));
        // bid below the margin price caps the order
        let o = decide_order(
            &params_for_310(0.05),
            &view(&[], Some(290.0), None),
            &mut rng,
            PricingMode::Literal,
            None,
        )
        .unwrap();
        assert_eq!(o.price, Some(ticks(290.0)));
    }

    #[test]
    fn no_order_when_expected_equals_current() {
        let mut rng = rng_from_seed(0);
        let mut v = view(&[], None, None);
        v.fundamental_price = v.market_price;
        assert!(decide_order(&params(1.0, 0.0, 0.0, 0.05), &v, &mut rng, PricingMode::Uncapped, None).is_none());
    }

    #[test]
    fn zero_chart_weight_ignores_history() {
        let p = FcnParams {
            sigma: 0.001,
            ..params(0.8, 0.0, 1.3, 0.05)
        };
        let flat = vec![ticks(300.0); 200];
        let trend: Vec<Ticks> = (0..200).map(|i| ticks(250.0) + 50_000 * i).collect();
        let mut a = rng_from_seed(5);
        let mut b = rng_from_seed(5);
        let da = evaluate(&p, &view(&flat, None, None), &mut a, PricingMode::Uncapped, None);
        let db = evaluate(&p, &view(&trend, None, None), &mut b, PricingMode::Uncapped, None);
        assert_ne!(da.chart, db.chart);
        assert_eq!(da.expected_return, db.expected_return);
        let manual = (0.8 * da.fundamental + 1.3 * da.noise) / 2.1;
        assert!((da.expected_return - manual).abs() < 1e-18);
    }

    #[test]
    fn sampling_from_ci2002() {
        let cfg = parse_config(include_str!("../../configs/ci2002.json")).unwrap();
        let group = &cfg.agent_groups[0];
        let markets = vec![Market::new(0, "Market", TICK, 300.0, 300.0).unwrap()];
        let mut rng = rng_from_seed(42);
        let mut prev: Option<FcnParams> = None;
        for id in 0..10_000 {
            let mut build = AgentBuild {
                agent_id: id,
                group,
                market_ids: vec![0],
                markets: &markets,
                tick_size: TICK,
                rng: &mut rng,
                child_seed: 0,
            };
            let (p, s) = fcn_new(&mut build).unwrap();
            assert_eq!(p.w_chart, 0.0);
            assert!((100..=200).contains(&p.tau));
            assert!((50.0..100.0).contains(&p.tau_star));
            assert!((0.0..0.1).contains(&p.k));
            assert_eq!(p.sigma, 0.001);
            if id == 0 {
                assert_eq!(s.cash_currency(TICK), 10_000.0);
                assert_eq!(s.position(0), 50);
            }
            if let Some(q) = prev {
                assert_ne!(p, q);
            }
            prev = Some(p);
        }
    }

    #[test]
    fn degenerate_weights_error() {
        let mut cfg = parse_config(include_str!("../../configs/ci2002.json")).unwrap();
        let group = &mut cfg.agent_groups[0];
        for key in ["fundamentalWeight", "chartWeight", "noiseWeight"] {
            group.params.insert(key.into(), RandomSpec::Exponential { mean: 0.0 });
        }
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            sample_params(group, 3, &mut rng),
            Err(AgentError::DegenerateWeights { agent_id: 3, .. })
        ));
    }
}
