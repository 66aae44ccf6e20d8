//! Experiment harness: profit accounting, the deep-vs-stylized population
//! sweep and its regression analysis.

pub mod emit;
pub mod ols;
pub mod stats;

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentState;
use crate::config::{AgentGroupConfig, SimulationConfig};
use crate::market::{ticks_to_currency, Ticks};
use crate::rng::derive_seed;
use crate::sim::{run, NullLogger, RunResult, SimError};
use emit::Columns;
use ols::{ols_fit, OlsError, OlsFit};

pub const DEEP_CLASS: &str = "DeepAgent";
pub const STYLIZED_CLASS: &str = "FCNAgent";

/// Mark-to-market profit in ticks: `(cash + Σ pos·p_final) - (cash_0 + Σ pos_0·p_initial)`.
pub fn profit_ticks(state: &AgentState, final_prices: &[Ticks], initial_prices: &[Ticks]) -> i64 {
    let now: i64 = state.positions.iter().zip(final_prices).map(|(q, p)| q * p).sum();
    let then: i64 = state
        .initial_positions
        .iter()
        .zip(initial_prices)
        .map(|(q, p)| q * p)
        .sum();
    (state.cash + now) - (state.initial_cash + then)
}

/// [`profit_ticks`] in currency.
pub fn profit(state: &AgentState, final_prices: &[Ticks], initial_prices: &[Ticks], tick_size: f64) -> f64 {
    ticks_to_currency(profit_ticks(state, final_prices, initial_prices), tick_size)
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep template has no {STYLIZED_CLASS} group")]
    NoStylizedGroup,
    #[error("n_da = {n_da} exceeds the {available} stylized agents in the template")]
    TooManyDeep { n_da: usize, available: usize },
    #[error("seed collision in the sweep grid at n_da = {n_da}, trial = {trial}")]
    SeedCollision { n_da: usize, trial: usize },
    #[error("run n_da = {n_da}, trial = {trial} failed: {source}")]
    Run {
        n_da: usize,
        trial: usize,
        #[source]
        source: SimError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One sweep cell. `avg_profit_*` values every agent's holdings at the final
/// price at both ends (trading profit, which sums to zero across agents);
/// `avg_mtm_profit_*` revalues the starting holdings at the initial price.
/// Deep fields are empty when `n_da = 0`. Variances are population variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_da: usize,
    pub n_sa: usize,
    pub trial: usize,
    pub seed: u64,
    pub avg_profit_deep: Option<f64>,
    pub avg_profit_stylized: Option<f64>,
    pub var_profit_deep: Option<f64>,
    pub var_profit_stylized: Option<f64>,
    pub avg_mtm_profit_deep: Option<f64>,
    pub avg_mtm_profit_stylized: Option<f64>,
    pub final_price: f64,
    /// Deep agents whose predictor passed the holdout gate.
    pub deep_gated: usize,
    /// Market orders filled for deep agents.
    pub deep_trades: usize,
}

impl Columns for SweepRow {
    const COLUMNS: &'static [&'static str] = &[
        "n_da",
        "n_sa",
        "trial",
        "seed",
        "avg_profit_deep",
        "avg_profit_stylized",
        "var_profit_deep",
        "var_profit_stylized",
        "avg_mtm_profit_deep",
        "avg_mtm_profit_stylized",
        "final_price",
        "deep_gated",
        "deep_trades",
    ];
}

pub fn cell_seed(base_seed: u64, n_da: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[n_da as u64, trial as u64])
}

/// The template with `n_da` of its stylized agents replaced by deep agents.
/// An existing `DeepAgent` group in the template is resized (and its options
/// kept); otherwise one is added with the stylized group's markets and
/// endowment.
pub fn cell_config(template: &SimulationConfig, n_da: usize) -> Result<SimulationConfig, SweepError> {
    let mut cfg = template.clone();
    let fcn = cfg
        .agent_groups
        .iter()
        .position(|g| g.class == STYLIZED_CLASS)
        .ok_or(SweepError::NoStylizedGroup)?;
    let available = cfg.agent_groups[fcn].num_agents;
    if n_da > available {
        return Err(SweepError::TooManyDeep { n_da, available });
    }
    cfg.agent_groups[fcn].num_agents = available - n_da;
    match cfg.agent_groups.iter().position(|g| g.class == DEEP_CLASS) {
        Some(d) => cfg.agent_groups[d].num_agents = n_da,
        None => {
            let base = &cfg.agent_groups[fcn];
            let options = crate::deep::class()
                .options
                .into_iter()
                .filter_map(|o| o.default.map(|v| (o.name.to_string(), v)))
                .collect();
            let group = AgentGroupConfig {
                name: "DeepAgents".into(),
                class: DEEP_CLASS.into(),
                num_agents: n_da,
                markets: base.markets.clone(),
                asset_volume: base.asset_volume,
                cash_amount: base.cash_amount,
                params: Default::default(),
                options,
                extra: Default::default(),
            };
            cfg.agent_groups.push(group);
        }
    }
    cfg.agent_groups.retain(|g| g.num_agents > 0);
    Ok(cfg)
}

fn mean_and_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var))
}

/// Summarizes one finished run.
pub fn summarize(result: &RunResult, n_da: usize, trial: usize) -> SweepRow {
    let (mut deep, mut stylized) = (Vec::new(), Vec::new());
    let (mut deep_mtm, mut stylized_mtm) = (Vec::new(), Vec::new());
    for a in &result.agents {
        let p = profit(&a.state, &result.final_prices, &result.final_prices, result.tick_size);
        let mtm = profit(&a.state, &result.final_prices, &result.initial_prices, result.tick_size);
        if a.class_name == DEEP_CLASS {
            deep.push(p);
            deep_mtm.push(mtm);
        } else {
            stylized.push(p);
            stylized_mtm.push(mtm);
        }
    }
    let is_deep = |id: usize| result.agents[id].class_name == DEEP_CLASS;
    let deep_trades = result
        .executions
        .iter()
        .map(|e| usize::from(is_deep(e.buy_agent_id)) + usize::from(is_deep(e.sell_agent_id)))
        .sum();
    let gated: HashSet<usize> = result
        .training_reports
        .iter()
        .filter(|r| r.gate_passed)
        .map(|r| r.agent_id)
        .collect();
    let d = mean_and_variance(&deep);
    let s = mean_and_variance(&stylized);
    SweepRow {
        n_da,
        n_sa: stylized.len(),
        trial,
        seed: result.seed,
        avg_profit_deep: d.map(|x| x.0),
        avg_profit_stylized: s.map(|x| x.0),
        var_profit_deep: d.map(|x| x.1),
        var_profit_stylized: s.map(|x| x.1),
        avg_mtm_profit_deep: mean_and_variance(&deep_mtm).map(|x| x.0),
        avg_mtm_profit_stylized: mean_and_variance(&stylized_mtm).map(|x| x.0),
        final_price: ticks_to_currency(result.final_prices[0], result.tick_size),
        deep_gated: gated.len(),
        deep_trades,
    }
}

/// Runs one cell and returns both the row and the full run.
pub fn run_cell(template: &SimulationConfig, base_seed: u64, n_da: usize, trial: usize) -> Result<(SweepRow, RunResult), SweepError> {
    let cfg = cell_config(template, n_da)?;
    let seed = cell_seed(base_seed, n_da, trial);
    let result = run(&cfg, seed, &mut NullLogger).map_err(|source| SweepError::Run { n_da, trial, source })?;
    Ok((summarize(&result, n_da, trial), result))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n_da_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub template: SimulationConfig,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

/// Runs every `(n_da, trial)` cell. Rows come back ordered by `n_da` then
/// `trial` regardless of completion order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    let cells: Vec<(usize, usize)> = spec
        .n_da_values
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let mut seen = HashSet::new();
    for &(n_da, trial) in &cells {
        if !seen.insert(cell_seed(spec.base_seed, n_da, trial)) {
            return Err(SweepError::SeedCollision { n_da, trial });
        }
    }
    for &n in &spec.n_da_values {
        cell_config(&spec.template, n)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(n_da, trial)| {
                let (row, _) = run_cell(&spec.template, spec.base_seed, n_da, trial)?;
                log::info!(
                    "n_da {n_da} trial {trial}: deep {:?} stylized {:?}",
                    row.avg_profit_deep,
                    row.avg_profit_stylized
                );
                Ok(row)
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAnalysis {
    pub deep: OlsFit,
    pub stylized: OlsFit,
    pub table: String,
}

/// Regresses per-row average profit on `n_da` for each agent type, one point
/// per row.
pub fn analyze_sweep(rows: &[SweepRow]) -> Result<SweepAnalysis, OlsError> {
    let (dx, dy): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.avg_profit_deep.map(|p| (r.n_da as f64, p)))
        .unzip();
    let (sx, sy): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.avg_profit_stylized.map(|p| (r.n_da as f64, p)))
        .unzip();
    let deep = ols_fit(&dx, &dy)?;
    let stylized = ols_fit(&sx, &sy)?;
    let table = format_table(&deep, &stylized);
    Ok(SweepAnalysis { deep, stylized, table })
}

fn with_stars(v: f64, p: f64) -> String {
    format!("{v:.4}{}", stats::stars(p))
}

/// Intercept/coefficient/R² table; `***` marks p < 0.001.
pub fn format_table(deep: &OlsFit, stylized: &OlsFit) -> String {
    let rows = [
        ("Metrics \\ Agents", "Deep Agents".to_string(), "Stylized Agents".to_string()),
        (
            "Intercept",
            with_stars(deep.intercept, deep.p_intercept),
            with_stars(stylized.intercept, stylized.p_intercept),
        ),
        (
            "Coefficient",
            with_stars(deep.slope, deep.p_slope),
            with_stars(stylized.slope, stylized.p_slope),
        ),
        ("R^2", format!("{:.3}", deep.r_squared), format!("{:.3}", stylized.r_squared)),
        (
            "Adjusted R^2",
            format!("{:.3}", deep.adjusted_r_squared),
            format!("{:.3}", stylized.adjusted_r_squared),
        ),
        (
            "p (intercept)",
            format!("{:.3e}", deep.p_intercept),
            format!("{:.3e}", stylized.p_intercept),
        ),
        ("p (coefficient)", format!("{:.3e}", deep.p_slope), format!("{:.3e}", stylized.p_slope)),
        ("n", deep.n.to_string(), stylized.n.to_string()),
    ];
    let mut out = String::new();
    for (label, d, s) in rows {
        let _ = writeln!(out, "{label:<18}{d:>16}{s:>18}");
    }
    out.push_str("*** p < 0.001\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const TEMPLATE: &str = include_str!("../../configs/sweep_template.json");

    #[test]
    fn profit_examples() {
        let tick = 1e-5;
        let mut s = AgentState::new(0, 1_000_000_000, vec![50]);
        assert_eq!(profit_ticks(&s, &[30_000_000], &[30_000_000]), 0);
        s.cash -= 30_000_000;
        s.positions[0] += 1;
        assert_eq!(profit(&s, &[31_000_000], &[30_000_000], tick), 10.0 + 50.0 * 10.0);
        let flat = AgentState::new(0, 1_000_000_000, vec![0]);
        let mut bought = flat.clone();
        bought.cash -= 30_000_000;
        bought.positions[0] = 1;
        assert_eq!(profit(&bought, &[31_000_000], &[30_000_000], tick), 10.0);
    }

    #[test]
    fn cell_config_swaps_agents() {
        let t = parse_config(TEMPLATE).unwrap();
        let c = cell_config(&t, 7).unwrap();
        assert_eq!(c.total_agents(), 100);
        assert_eq!(c.agent_groups[0].num_agents, 93);
        assert_eq!(c.agent_groups[1].class, DEEP_CLASS);
        assert_eq!(c.agent_groups[1].asset_volume, 50);
        let zero = cell_config(&t, 0).unwrap();
        assert_eq!(zero.agent_groups.len(), 1);
        assert!(matches!(cell_config(&t, 101), Err(SweepError::TooManyDeep { .. })));
    }

    #[test]
    fn seeds_are_distinct_on_full_grid() {
        let mut seen = HashSet::new();
        for n in 1..=20 {
            for t in 0..10 {
                assert!(seen.insert(cell_seed(42, n, t)));
            }
        }
    }

    #[test]
    fn control_row_satisfies_wealth_identity() {
        let mut t = parse_config(TEMPLATE).unwrap();
        t.sessions.truncate(2);
        let (row, result) = run_cell(&t, 5, 0, 0).unwrap();
        assert_eq!((row.n_da, row.n_sa), (0, 100));
        assert_eq!(row.avg_profit_deep, None);
        let total: i64 = result
            .agents
            .iter()
            .map(|a| profit_ticks(&a.state, &result.final_prices, &result.initial_prices))
            .sum();
        assert_eq!(total, 5_000 * (result.final_prices[0] - result.initial_prices[0]));
    }

    fn synthetic(a_d: f64, b_d: f64, a_s: f64, b_s: f64) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for n in [0usize, 1, 5, 10, 20] {
            for trial in 0..3 {
                let x = n as f64;
                rows.push(SweepRow {
                    n_da: n,
                    n_sa: 100 - n,
                    trial,
                    seed: 0,
                    avg_profit_deep: (n > 0).then_some(a_d + b_d * x),
                    avg_profit_stylized: Some(a_s + b_s * x),
                    var_profit_deep: None,
                    var_profit_stylized: None,
                    avg_mtm_profit_deep: None,
                    avg_mtm_profit_stylized: None,
                    final_price: 300.0,
                    deep_gated: 0,
                    deep_trades: 0,
                });
            }
        }
        rows
    }

    #[test]
    fn analysis_recovers_exact_rule() {
        let a = analyze_sweep(&synthetic(22.5, -0.25, 0.0, -0.25)).unwrap();
        assert!((a.deep.intercept - 22.5).abs() < 1e-12);
        assert!((a.deep.slope + 0.25).abs() < 1e-12);
        assert!((a.stylized.slope + 0.25).abs() < 1e-12);
        assert_eq!(a.deep.n, 12);
        assert_eq!(a.stylized.n, 15);
        assert!(a.table.contains("Intercept"));
        assert_eq!(a, analyze_sweep(&synthetic(22.5, -0.25, 0.0, -0.25)).unwrap());
    }

    #[test]
    fn single_n_da_is_degenerate() {
        let rows: Vec<SweepRow> = synthetic(1.0, 0.0, 0.0, 0.0).into_iter().filter(|r| r.n_da == 5).collect();
        assert_eq!(analyze_sweep(&rows).unwrap_err(), OlsError::DegenerateX);
    }
}
