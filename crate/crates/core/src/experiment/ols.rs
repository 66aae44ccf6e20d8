//! Simple linear regression `y = a + b x` with t tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::student_t_two_sided_p;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x and y have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all x values are equal; vary n_da across rows to fit a slope")]
    DegenerateX,
    #[error("non-finite input value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub t_intercept: f64,
    pub t_slope: f64,
    pub p_intercept: f64,
    pub p_slope: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
}

fn t_stat(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        estimate.signum() * f64::INFINITY
    }
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit, OlsError> {
    if x.len() != y.len() {
        return Err(OlsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(OlsError::TooFewPoints(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(OlsError::NonFinite);
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(OlsError::DegenerateX);
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - x_mean) * (b - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - y_mean).powi(2)).sum();
    let df = nf - 2.0;
    let s = (ss_res / df).sqrt();
    let se_slope = s / sxx.sqrt();
    let se_intercept = s * (1.0 / nf + x_mean * x_mean / sxx).sqrt();
    let t_slope = t_stat(slope, se_slope);
    let t_intercept = t_stat(intercept, se_intercept);
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(OlsFit {
        n,
        intercept,
        slope,
        se_intercept,
        se_slope,
        t_intercept,
        t_slope,
        p_intercept: student_t_two_sided_p(t_intercept, df),
        p_slope: student_t_two_sided_p(t_slope, df),
        r_squared,
        adjusted_r_squared: 1.0 - (1.0 - r_squared) * (nf - 1.0) / df,
    })
}
