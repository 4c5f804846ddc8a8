//! Launch-time gains of a treated run over a baseline run.
//!
//! For an activity whose launch-time trend has Sen slope `b` (ms/s):
//!
//! ```text
//! LT        = b · horizon
//! TTAF      = threshold / b            (infinite when b ≤ 0)
//! Gain_LT   = (LT − LT_r) / LT · 100
//! Gain_TTAF = (TTAF_r − TTAF) / TTAF · 100
//! ```
//!
//! where the `_r` quantities come from the treated run. An infinite
//! treated TTAF gives a `+inf` gain, which is left out of averages along
//! with any other non-finite gain.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::SimError;
use crate::indicators::{indicator_kind, IndicatorSet};
use crate::trend::sen_slope;

pub fn lt_increase(slope: f64, horizon_s: f64) -> f64 {
    slope * horizon_s
}

pub fn ttaf_s(slope: f64, threshold: f64) -> f64 {
    if slope > 0.0 {
        threshold / slope
    } else {
        f64::INFINITY
    }
}

pub fn gain_lt(lt: f64, lt_r: f64) -> f64 {
    (lt - lt_r) / lt * 100.0
}

/// `+inf` when only the treated run never fails; NaN when neither does.
pub fn gain_ttaf(ttaf: f64, ttaf_r: f64) -> f64 {
    if ttaf.is_finite() && ttaf_r.is_infinite() {
        return f64::INFINITY;
    }
    (ttaf_r - ttaf) / ttaf * 100.0
}

/// Mean of the finite values; `None` if there are none.
pub fn mean_finite(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityGain {
    pub activity: String,
    pub slope: f64,
    pub lt_increase_ms: f64,
    pub ttaf_s: f64,
    pub slope_r: f64,
    pub lt_increase_r_ms: f64,
    pub ttaf_r_s: f64,
    pub gain_lt_pct: f64,
    pub gain_ttaf_pct: f64,
}

impl ActivityGain {
    pub fn from_slopes(activity: &str, slope: f64, slope_r: f64, horizon_s: f64, threshold: f64) -> Self {
        let lt = lt_increase(slope, horizon_s);
        let lt_r = lt_increase(slope_r, horizon_s);
        let ttaf = ttaf_s(slope, threshold);
        let ttaf_r = ttaf_s(slope_r, threshold);
        ActivityGain {
            activity: activity.to_string(),
            slope,
            lt_increase_ms: lt,
            ttaf_s: ttaf,
            slope_r,
            lt_increase_r_ms: lt_r,
            ttaf_r_s: ttaf_r,
            gain_lt_pct: gain_lt(lt, lt_r),
            gain_ttaf_pct: gain_ttaf(ttaf, ttaf_r),
        }
    }
}

/// Sen slope of every `launch_time:*` series, keyed by activity name.
pub fn launch_time_slopes(set: &IndicatorSet) -> Result<Vec<(String, f64)>, SimError> {
    set.of_kind("launch_time")
        .map(|s| {
            let activity = s.name()[indicator_kind(s.name()).len() + 1..].to_string();
            let slope = sen_slope(s.samples()).map_err(|e| SimError::Trend(format!("{}: {e}", s.name())))?;
            Ok((activity, slope))
        })
        .collect()
}

/// Per-activity gains of `treated` over `baseline`, for every activity of
/// the baseline.
pub fn compute_gains(
    baseline: &IndicatorSet,
    treated: &IndicatorSet,
    horizon_s: f64,
    threshold_ms: f64,
) -> Result<Vec<ActivityGain>, SimError> {
    let base = launch_time_slopes(baseline)?;
    let treated = launch_time_slopes(treated)?;
    base.iter()
        .map(|(activity, slope)| {
            let slope_r = treated
                .iter()
                .find(|(a, _)| a == activity)
                .map(|(_, s)| *s)
                .ok_or_else(|| SimError::MissingActivity(activity.clone()))?;
            Ok(ActivityGain::from_slopes(activity, *slope, slope_r, horizon_s, threshold_ms))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentComparison {
    pub experiment_id: String,
    pub rows: Vec<ActivityGain>,
    pub mean_gain_lt_pct: Option<f64>,
    pub mean_gain_ttaf_pct: Option<f64>,
}

impl ExperimentComparison {
    pub fn new(experiment_id: impl Into<String>, rows: Vec<ActivityGain>) -> Self {
        ExperimentComparison {
            experiment_id: experiment_id.into(),
            mean_gain_lt_pct: mean_finite(rows.iter().map(|r| r.gain_lt_pct)),
            mean_gain_ttaf_pct: mean_finite(rows.iter().map(|r| r.gain_ttaf_pct)),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub baseline_id: String,
    pub horizon_s: f64,
    pub threshold_ms: f64,
    pub experiments: Vec<ExperimentComparison>,
}

/// Launch-time indicators of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunIndicators {
    pub experiment_id: String,
    pub indicators: IndicatorSet,
}

/// Compares every run against the one named `baseline_id`.
pub fn summarize(
    runs: &[RunIndicators],
    baseline_id: &str,
    horizon_s: f64,
    threshold_ms: f64,
) -> Result<ComparisonTable, SimError> {
    let baseline = runs
        .iter()
        .find(|r| r.experiment_id == baseline_id)
        .ok_or_else(|| SimError::MissingBaseline(baseline_id.to_string()))?;
    let experiments = runs
        .iter()
        .filter(|r| r.experiment_id != baseline_id)
        .map(|r| {
            let rows = compute_gains(&baseline.indicators, &r.indicators, horizon_s, threshold_ms)?;
            Ok(ExperimentComparison::new(r.experiment_id.clone(), rows))
        })
        .collect::<Result<_, SimError>>()?;
    Ok(ComparisonTable {
        baseline_id: baseline_id.to_string(),
        horizon_s,
        threshold_ms,
        experiments,
    })
}

fn hours(s: f64) -> String {
    if s.is_finite() {
        format!("{:.3}", s / 3600.0)
    } else {
        "+inf".to_string()
    }
}

fn pct(v: f64) -> String {
    if v.is_finite() {
        format!("{v:+.1}")
    } else if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        "n/a".to_string()
    }
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), pct)
}

impl ComparisonTable {
    pub fn experiment(&self, id: &str) -> Option<&ExperimentComparison> {
        self.experiments.iter().find(|e| e.experiment_id == id)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "experiment",
            "activity",
            "slope_ms_per_s",
            "lt_increase_ms",
            "ttaf_h",
            "slope_r_ms_per_s",
            "lt_increase_r_ms",
            "ttaf_r_h",
            "gain_lt_pct",
            "gain_ttaf_pct",
        ])?;
        for exp in &self.experiments {
            for r in &exp.rows {
                w.write_record([
                    exp.experiment_id.clone(),
                    r.activity.clone(),
                    format!("{:.6}", r.slope),
                    format!("{:.3}", r.lt_increase_ms),
                    hours(r.ttaf_s),
                    format!("{:.6}", r.slope_r),
                    format!("{:.3}", r.lt_increase_r_ms),
                    hours(r.ttaf_r_s),
                    pct(r.gain_lt_pct),
                    pct(r.gain_ttaf_pct),
                ])?;
            }
            w.write_record([
                exp.experiment_id.as_str(),
                "Average",
                "",
                "",
                "",
                "",
                "",
                "",
                &opt_pct(exp.mean_gain_lt_pct),
                &opt_pct(exp.mean_gain_ttaf_pct),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for exp in &self.experiments {
            let _ = writeln!(out, "## {} against {}\n", exp.experiment_id, self.baseline_id);
            let _ = writeln!(
                out,
                "| Activity | Slope [ms/s] | LT increase [ms] | TTAF [h] | Slope^r [ms/s] | LT^r increase [ms] | TTAF^r [h] | Gain_LT [%] | Gain_TTAF [%] |"
            );
            let _ = writeln!(out, "|---|--:|--:|--:|--:|--:|--:|--:|--:|");
            for r in &exp.rows {
                let _ = writeln!(
                    out,
                    "| {} | {:.4} | {:.3} | {} | {:.4} | {:.3} | {} | {} | {} |",
                    r.activity,
                    r.slope,
                    r.lt_increase_ms,
                    hours(r.ttaf_s),
                    r.slope_r,
                    r.lt_increase_r_ms,
                    hours(r.ttaf_r_s),
                    pct(r.gain_lt_pct),
                    pct(r.gain_ttaf_pct),
                );
            }
            let _ = writeln!(
                out,
                "| **Average** | | | | | | | **{}** | **{}** |\n",
                opt_pct(exp.mean_gain_lt_pct),
                opt_pct(exp.mean_gain_ttaf_pct)
            );
        }
        out
    }
}
