//! Mann-Kendall trend test and Sen's slope estimator.
//!
//! The Mann-Kendall statistic counts concordant minus discordant pairs,
//! `S = Σ_{i<j} sign(v_j − v_i)`. Under the no-trend hypothesis `S` is
//! approximately normal with variance
//!
//! ```text
//! Var(S) = [n(n−1)(2n+5) − Σ_t t(t−1)(2t+5)] / 18
//! ```
//!
//! where `t` ranges over the sizes of groups of tied values. The standardized
//! statistic applies a continuity correction of one towards zero, and the
//! two-sided p-value is the normal tail mass beyond `|Z|`.
//!
//! Sen's slope is the median of all pairwise slopes `(v_j − v_i)/(t_j − t_i)`;
//! with an even number of pairs it is the mean of the two middle slopes.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::indicators::IndicatorSeries;

#[derive(Debug, Error, PartialEq)]
pub enum TrendError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample values must be finite")]
    NonFiniteValue,
    #[error("two samples share timestamp {0}")]
    DuplicateTimestamp(f64),
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("window must be at least 3, got {0}")]
    InvalidWindow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannKendall {
    pub s_statistic: i64,
    pub variance_s: f64,
    pub z_score: f64,
    pub p_value: f64,
}

/// Runs the Mann-Kendall test on `values` in order.
///
/// A series made only of ties has zero variance; it is reported as
/// `S = 0`, `Z = 0`, `p = 1` rather than as an error, since that is the
/// no-trend outcome callers act on.
pub fn mann_kendall(values: &[f64]) -> Result<MannKendall, TrendError> {
    let n = values.len();
    if n < 3 {
        return Err(TrendError::TooFewSamples { needed: 3, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TrendError::NonFiniteValue);
    }

    let mut s: i64 = 0;
    for i in 0..n - 1 {
        let vi = values[i];
        for &vj in &values[i + 1..] {
            if vj > vi {
                s += 1;
            } else if vj < vi {
                s -= 1;
            }
        }
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut run = 1usize;
    for i in 1..=n {
        if i < n && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            if run > 1 {
                let t = run as f64;
                tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
            }
            run = 1;
        }
    }
    let nf = n as f64;
    let variance_s = ((nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0).max(0.0);

    if variance_s == 0.0 {
        return Ok(MannKendall {
            s_statistic: s,
            variance_s,
            z_score: 0.0,
            p_value: 1.0,
        });
    }
    let sd = variance_s.sqrt();
    let z_score = match s {
        s if s > 0 => (s as f64 - 1.0) / sd,
        s if s < 0 => (s as f64 + 1.0) / sd,
        _ => 0.0,
    };
    let p_value = erfc(z_score.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(MannKendall {
        s_statistic: s,
        variance_s,
        z_score,
        p_value,
    })
}

/// Sen's slope over `(timestamp, value)` samples, in value units per time unit.
pub fn sen_slope(samples: &[(f64, f64)]) -> Result<f64, TrendError> {
    let n = samples.len();
    if n < 2 {
        return Err(TrendError::TooFewSamples { needed: 2, got: n });
    }
    if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return Err(TrendError::NonFiniteValue);
    }
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n - 1 {
        let (ti, vi) = samples[i];
        for &(tj, vj) in &samples[i + 1..] {
            let dt = tj - ti;
            if dt == 0.0 {
                return Err(TrendError::DuplicateTimestamp(ti));
            }
            slopes.push((vj - vi) / dt);
        }
    }
    Ok(median_in_place(&mut slopes))
}

fn median_in_place(xs: &mut [f64]) -> f64 {
    let m = xs.len();
    let mid = m / 2;
    let (_, upper, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if m % 2 == 1 {
        upper
    } else {
        let lower = xs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendResult {
    pub s_statistic: i64,
    pub variance_s: f64,
    pub z_score: f64,
    pub p_value: f64,
    /// Sen's slope, value units per second.
    pub slope: f64,
    pub direction: Direction,
}

/// Mann-Kendall and Sen over the whole of `samples`.
pub fn trend(samples: &[(f64, f64)], alpha: f64) -> Result<TrendResult, TrendError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TrendError::InvalidAlpha(alpha));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mk = mann_kendall(&values)?;
    let slope = sen_slope(samples)?;
    let direction = if mk.p_value <= alpha && mk.s_statistic > 0 {
        Direction::Increasing
    } else if mk.p_value <= alpha && mk.s_statistic < 0 {
        Direction::Decreasing
    } else {
        Direction::None
    };
    Ok(TrendResult {
        s_statistic: mk.s_statistic,
        variance_s: mk.variance_s,
        z_score: mk.z_score,
        p_value: mk.p_value,
        slope,
        direction,
    })
}

/// Trend over the most recent `window` samples of `series`.
pub fn windowed_trend(
    series: &IndicatorSeries,
    window: usize,
    alpha: f64,
) -> Result<TrendResult, TrendError> {
    if window < 3 {
        return Err(TrendError::InvalidWindow(window));
    }
    let samples = series.samples();
    if samples.len() < window {
        return Err(TrendError::TooFewSamples {
            needed: window,
            got: samples.len(),
        });
    }
    trend(&samples[samples.len() - window..], alpha)
}
