//! Aging detection over indicator streams and rejuvenation scheduling.
//!
//! Every indicator is tested on a sliding window with Mann-Kendall and Sen.
//! When the window keeps showing a significant trend in the indicator's
//! degradation direction for at least `min_persistence_s`, an
//! [`AgingAlert`] is raised. Active alerts are fused by [`AlarmRule`]s into
//! an [`AgingAlarm`] whose confidence is that of the strongest matching
//! rule, and the [`SchedulerPolicy`] turns the alarm into a [`Decision`].
//!
//! Failure thresholds are expressed as an increase over a baseline: the
//! median of the first full window after start-up or after a reset.
//!
//! Samples of kind `load` (for example `load:cpu`, a utilization fraction in
//! `[0, 1]`) are not trend-tested; they feed the load level used by the
//! postpone policy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{default_degradation, indicator_kind, Degrades, IndicatorError, IndicatorSet};
use crate::trend::{trend, Direction, TrendResult};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Low => "low",
            Confidence::Medium => "medium",
            Confidence::High => "high",
            Confidence::VeryHigh => "very_high",
        })
    }
}

/// Matches an indicator name against `pattern`; a trailing `*` matches any suffix.
pub fn matches_pattern(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => pattern == name,
    }
}

/// Looks up the entry whose pattern matches `name`: an exact key wins, then
/// the longest matching wildcard.
fn lookup<'a, T>(map: &'a BTreeMap<String, T>, name: &str) -> Option<&'a T> {
    if let Some(v) = map.get(name) {
        return Some(v);
    }
    map.iter()
        .filter(|(p, _)| p.ends_with('*') && matches_pattern(p, name))
        .max_by_key(|(p, _)| p.len())
        .map(|(_, v)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmRule {
    /// Indicator names or `kind:*` patterns that must all have an active alert.
    pub required_indicators: Vec<String>,
    pub confidence: Confidence,
}

impl AlarmRule {
    pub fn new<S: Into<String>>(
        required: impl IntoIterator<Item = S>,
        confidence: Confidence,
    ) -> Result<Self, DetectorError> {
        let rule = AlarmRule {
            required_indicators: required.into_iter().map(Into::into).collect(),
            confidence,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.required_indicators.is_empty() {
            return Err(DetectorError::InvalidConfig(
                "alarm rule needs at least one indicator".into(),
            ));
        }
        Ok(())
    }

    pub fn matches<'a>(&self, indicators: impl Iterator<Item = &'a str> + Clone) -> bool {
        self.required_indicators
            .iter()
            .all(|p| indicators.clone().any(|name| matches_pattern(p, name)))
    }
}

/// A launch-time alert together with a `system_server` PSS alert gives a
/// very-high-confidence alarm.
pub fn default_rules() -> Vec<AlarmRule> {
    vec![AlarmRule {
        required_indicators: vec!["launch_time:*".into(), "pss:system_server".into()],
        confidence: Confidence::VeryHigh,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingAlert {
    pub indicator: String,
    /// Time of the first window in the current run of degrading windows.
    pub first_seen: f64,
    pub persistence_s: f64,
    /// Sen's slope in the indicator's own units per second.
    pub slope: f64,
    pub p_value: f64,
    /// Accumulated degradation over the baseline, in indicator units.
    pub current_level: f64,
    pub ttaf_s: Option<f64>,
    pub raised_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingAlarm {
    pub confidence: Confidence,
    pub contributing_alerts: Vec<AgingAlert>,
    /// `None` when no contributing indicator is heading for its threshold.
    pub ttaf_s: Option<f64>,
    pub raised_at: f64,
}

/// Which alert sets the alarm's time to aging failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtafSource {
    /// The soonest launch-time alert, else the soonest of any alert.
    #[default]
    PreferLaunchTime,
    /// The soonest of any alert.
    Soonest,
}

/// Fuses alerts with the strongest matching rule; `None` when no rule matches.
pub fn fuse(alerts: &[AgingAlert], rules: &[AlarmRule], now: f64) -> Option<AgingAlarm> {
    fuse_with(alerts, rules, now, TtafSource::default())
}

pub fn fuse_with(
    alerts: &[AgingAlert],
    rules: &[AlarmRule],
    now: f64,
    source: TtafSource,
) -> Option<AgingAlarm> {
    let names = alerts.iter().map(|a| a.indicator.as_str());
    let rule = rules
        .iter()
        .filter(|r| r.matches(names.clone()))
        .max_by_key(|r| r.confidence)?;
    let contributing: Vec<AgingAlert> = alerts
        .iter()
        .filter(|a| {
            rule.required_indicators
                .iter()
                .any(|p| matches_pattern(p, &a.indicator))
        })
        .cloned()
        .collect();
    let soonest = |pred: &dyn Fn(&AgingAlert) -> bool| {
        contributing
            .iter()
            .filter(|a| pred(a))
            .filter_map(|a| a.ttaf_s)
            .min_by(f64::total_cmp)
    };
    let ttaf_s = match source {
        TtafSource::PreferLaunchTime => {
            soonest(&|a| indicator_kind(&a.indicator) == "launch_time").or_else(|| soonest(&|_| true))
        }
        TtafSource::Soonest => soonest(&|_| true),
    };
    Some(AgingAlarm {
        confidence: rule.confidence,
        contributing_alerts: contributing,
        ttaf_s,
        raised_at: now,
    })
}

/// Seconds until `current_level` reaches `failure_threshold` at `slope` per
/// second; `None` unless the slope is positive. A level already past the
/// threshold gives zero.
pub fn estimate_ttaf(current_level: f64, slope: f64, failure_threshold: f64) -> Option<f64> {
    if !(slope > 0.0) || !slope.is_finite() {
        return None;
    }
    Some(((failure_threshold - current_level) / slope).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadLevel {
    Low,
    Medium,
    High,
}

/// CPU-utilization cut points between load levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadThresholds {
    /// Utilization strictly below this is low.
    pub low_below: f64,
    /// Utilization strictly above this is high.
    pub high_above: f64,
}

impl Default for LoadThresholds {
    fn default() -> Self {
        LoadThresholds {
            low_below: 0.30,
            high_above: 0.70,
        }
    }
}

impl LoadThresholds {
    pub fn classify(&self, cpu_utilization: f64) -> LoadLevel {
        if cpu_utilization < self.low_below {
            LoadLevel::Low
        } else if cpu_utilization > self.high_above {
            LoadLevel::High
        } else {
            LoadLevel::Medium
        }
    }

    fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.low_below)
            || !(0.0..=1.0).contains(&self.high_above)
            || self.low_below > self.high_above
        {
            return Err(DetectorError::InvalidConfig(
                "load thresholds must satisfy 0 <= low_below <= high_above <= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Piecewise-constant load level over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadTimeline {
    changes: Vec<(f64, LoadLevel)>,
}

impl LoadTimeline {
    pub fn constant(level: LoadLevel) -> Self {
        LoadTimeline {
            changes: vec![(f64::NEG_INFINITY, level)],
        }
    }

    /// `changes` are `(from_time, level)` pairs; they are sorted by time.
    pub fn from_changes(mut changes: Vec<(f64, LoadLevel)>) -> Self {
        changes.sort_by(|a, b| a.0.total_cmp(&b.0));
        LoadTimeline { changes }
    }

    pub fn push(&mut self, t: f64, level: LoadLevel) {
        if self.changes.last().map_or(true, |&(_, l)| l != level) {
            self.changes.push((t, level));
        }
    }

    /// Level in force at `t`; unknown load counts as high.
    pub fn level_at(&self, t: f64) -> LoadLevel {
        self.changes
            .iter()
            .take_while(|(from, _)| *from <= t)
            .last()
            .map_or(LoadLevel::High, |&(_, l)| l)
    }

    /// First time in `[from, until]` at which the level is at most `gate`.
    pub fn first_at_most(&self, gate: LoadLevel, from: f64, until: f64) -> Option<f64> {
        if self.level_at(from) <= gate {
            return Some(from);
        }
        self.changes
            .iter()
            .find(|(t, l)| *t > from && *t <= until && *l <= gate)
            .map(|&(t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    WarnOnly,
    Immediate,
    Postpone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerPolicy {
    pub mode: PolicyMode,
    pub safety_margin_s: f64,
    /// Highest load level at which a postponed rejuvenation may fire early.
    pub load_gate: LoadLevel,
    /// Alarms below this confidence only warn.
    pub min_confidence: Confidence,
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        SchedulerPolicy {
            mode: PolicyMode::WarnOnly,
            safety_margin_s: 1800.0,
            load_gate: LoadLevel::Low,
            min_confidence: Confidence::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Decision {
    Warn,
    RejuvenateNow,
    RejuvenateAt { at: f64 },
}

/// Decides what to do about `alarm` at time `now`.
///
/// With the postpone policy the deadline is `raised_at + ttaf − margin`
/// (never before `now`); rejuvenation fires at the first moment up to the
/// deadline when the load is at or below the gate, else at the deadline.
/// Without a time to failure there is no deadline, and only a low-load
/// window can trigger it.
pub fn schedule(
    alarm: &AgingAlarm,
    policy: &SchedulerPolicy,
    load: &LoadTimeline,
    now: f64,
) -> Decision {
    if alarm.confidence < policy.min_confidence {
        return Decision::Warn;
    }
    match policy.mode {
        PolicyMode::WarnOnly => Decision::Warn,
        PolicyMode::Immediate => Decision::RejuvenateNow,
        PolicyMode::Postpone => {
            let deadline = alarm
                .ttaf_s
                .map(|ttaf| (alarm.raised_at + ttaf - policy.safety_margin_s).max(now));
            let until = deadline.unwrap_or(f64::INFINITY);
            match load.first_at_most(policy.load_gate, now, until) {
                Some(t) if t <= now => Decision::RejuvenateNow,
                Some(t) => Decision::RejuvenateAt { at: t },
                None => match deadline {
                    Some(d) if d <= now => Decision::RejuvenateNow,
                    Some(d) => Decision::RejuvenateAt { at: d },
                    None => Decision::Warn,
                },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub window: usize,
    pub alpha: f64,
    pub min_persistence_s: f64,
    pub rules: Vec<AlarmRule>,
    /// Degradation direction overrides, keyed by name or `kind:*` pattern.
    pub degrades: BTreeMap<String, Degrades>,
    /// Failure thresholds as an increase over baseline, keyed like `degrades`.
    pub thresholds: BTreeMap<String, f64>,
    pub ttaf_source: TtafSource,
    pub policy: SchedulerPolicy,
    pub load: LoadThresholds,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 30,
            alpha: 0.05,
            min_persistence_s: 600.0,
            rules: default_rules(),
            degrades: BTreeMap::new(),
            thresholds: [("launch_time:*".to_string(), 200.0)].into(),
            ttaf_source: TtafSource::default(),
            policy: SchedulerPolicy::default(),
            load: LoadThresholds::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let invalid = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.window < 3 {
            return invalid("window must be at least 3");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if !(self.min_persistence_s >= 0.0) {
            return invalid("min_persistence_s must be non-negative");
        }
        if !(self.policy.safety_margin_s >= 0.0) {
            return invalid("safety_margin_s must be non-negative");
        }
        if self.thresholds.values().any(|t| !(*t > 0.0)) {
            return invalid("thresholds must be positive");
        }
        for rule in &self.rules {
            rule.validate()?;
        }
        self.load.validate()
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, DetectorError> {
        let cfg: DetectorConfig = toml::from_str(text).map_err(|e| DetectorError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, DetectorError> {
        let cfg: DetectorConfig = serde_json::from_str(text).map_err(|e| DetectorError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| DetectorError::Io {
            path: origin.clone(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text, &origin)
        } else {
            Self::from_toml_str(&text, &origin)
        }
    }

    pub fn degradation(&self, name: &str) -> Degrades {
        lookup(&self.degrades, name)
            .copied()
            .unwrap_or_else(|| default_degradation(name))
    }

    pub fn threshold(&self, name: &str) -> Option<f64> {
        lookup(&self.thresholds, name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DetectorEvent {
    Alert {
        t: f64,
        alert: AgingAlert,
    },
    AlertCleared {
        t: f64,
        indicator: String,
    },
    Alarm {
        t: f64,
        alarm: AgingAlarm,
    },
    Decision {
        t: f64,
        confidence: Confidence,
        decision: Decision,
    },
    Reset {
        t: f64,
    },
}

impl DetectorEvent {
    pub fn time(&self) -> f64 {
        match self {
            DetectorEvent::Alert { t, .. }
            | DetectorEvent::AlertCleared { t, .. }
            | DetectorEvent::Alarm { t, .. }
            | DetectorEvent::Decision { t, .. }
            | DetectorEvent::Reset { t } => *t,
        }
    }
}

pub fn write_event_log<W: Write>(mut writer: W, events: &[DetectorEvent]) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Clone, Default)]
struct Track {
    window: VecDeque<(f64, f64)>,
    last_t: Option<f64>,
    baseline: Option<f64>,
    degrading_since: Option<f64>,
    last_trend: Option<TrendResult>,
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// Read-only view of the detector state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorStatus {
    pub active_alerts: Vec<AgingAlert>,
    pub alarm: Option<AgingAlarm>,
    pub load: Option<LoadLevel>,
    pub last_reset: f64,
}

/// Streaming detector. Samples must arrive in non-decreasing time order per
/// indicator; decisions are returned as events for the caller to act on.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    tracks: BTreeMap<String, Track>,
    alerts: BTreeMap<String, AgingAlert>,
    alarm: Option<AgingAlarm>,
    load: LoadTimeline,
    current_load: Option<LoadLevel>,
    /// Deadline of a postponed rejuvenation not yet due.
    pending_at: Option<f64>,
    last_reset: f64,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, DetectorError> {
        cfg.validate()?;
        Ok(Detector {
            cfg,
            tracks: BTreeMap::new(),
            alerts: BTreeMap::new(),
            alarm: None,
            load: LoadTimeline::default(),
            current_load: None,
            pending_at: None,
            last_reset: f64::NEG_INFINITY,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn status(&self) -> DetectorStatus {
        DetectorStatus {
            active_alerts: self.alerts.values().cloned().collect(),
            alarm: self.alarm.clone(),
            load: self.current_load,
            last_reset: self.last_reset,
        }
    }

    /// Baseline of `name` since the last reset, once a full window is seen.
    pub fn baseline(&self, name: &str) -> Option<f64> {
        self.tracks.get(name).and_then(|t| t.baseline)
    }

    pub fn last_trend(&self, name: &str) -> Option<&TrendResult> {
        self.tracks.get(name).and_then(|t| t.last_trend.as_ref())
    }

    /// Forgets every sample, baseline, alert and alarm: the system is
    /// healthy again after a rejuvenation or reboot at `now`.
    pub fn reset(&mut self, now: f64) -> DetectorEvent {
        self.tracks.clear();
        self.alerts.clear();
        self.alarm = None;
        self.pending_at = None;
        self.last_reset = now;
        DetectorEvent::Reset { t: now }
    }

    pub fn ingest(&mut self, name: &str, t: f64, value: f64) -> Result<Vec<DetectorEvent>, DetectorError> {
        if !t.is_finite() || !value.is_finite() {
            return Err(IndicatorError::NonFinite {
                name: name.to_string(),
                timestamp: t,
            }
            .into());
        }
        if indicator_kind(name) == "load" {
            return Ok(self.ingest_load(t, value));
        }

        let window = self.cfg.window;
        let track = self.tracks.entry(name.to_string()).or_default();
        if let Some(prev) = track.last_t {
            if t <= prev {
                return Err(IndicatorError::NonIncreasingTimestamp {
                    name: name.to_string(),
                    previous: prev,
                    next: t,
                }
                .into());
            }
        }
        track.last_t = Some(t);
        track.window.push_back((t, value));
        if track.window.len() > window {
            track.window.pop_front();
        }
        if track.window.len() < window {
            return Ok(Vec::new());
        }
        if track.baseline.is_none() {
            track.baseline = Some(median(track.window.iter().map(|s| s.1)));
        }

        let samples: Vec<(f64, f64)> = track.window.iter().copied().collect();
        let result = trend(&samples, self.cfg.alpha).expect("window holds valid samples");
        track.last_trend = Some(result);
        let degrades = self.cfg.degradation(name);
        let sign = match degrades {
            Degrades::Up => 1.0,
            Degrades::Down => -1.0,
        };
        let degrading = matches!(
            (degrades, result.direction),
            (Degrades::Up, Direction::Increasing) | (Degrades::Down, Direction::Decreasing)
        );

        let mut events = Vec::new();
        if !degrading {
            track.degrading_since = None;
            if self.alerts.remove(name).is_some() {
                events.push(DetectorEvent::AlertCleared {
                    t,
                    indicator: name.to_string(),
                });
            }
            return Ok(events);
        }

        let first_seen = *track.degrading_since.get_or_insert(t);
        let persistence_s = t - first_seen;
        let baseline = track.baseline.expect("set above");
        let current_level = sign * (median(samples.iter().map(|s| s.1)) - baseline);
        let oriented_slope = sign * result.slope;
        let ttaf_s = self
            .cfg
            .threshold(name)
            .and_then(|thr| estimate_ttaf(current_level, oriented_slope, thr));

        let active = self.alerts.contains_key(name);
        if active || persistence_s >= self.cfg.min_persistence_s {
            let alert = AgingAlert {
                indicator: name.to_string(),
                first_seen,
                persistence_s,
                slope: result.slope,
                p_value: result.p_value,
                current_level,
                ttaf_s,
                raised_at: self.alerts.get(name).map_or(t, |a| a.raised_at),
            };
            if !active {
                events.push(DetectorEvent::Alert {
                    t,
                    alert: alert.clone(),
                });
            }
            self.alerts.insert(name.to_string(), alert);
            if !active {
                events.extend(self.evaluate_alarm(t));
            }
        }
        Ok(events)
    }

    fn ingest_load(&mut self, t: f64, cpu: f64) -> Vec<DetectorEvent> {
        let level = self.cfg.load.classify(cpu);
        self.current_load = Some(level);
        self.load.push(t, level);
        let mut events = Vec::new();
        if let (Some(at), Some(alarm)) = (self.pending_at, &self.alarm) {
            if t < at && level <= self.cfg.policy.load_gate {
                self.pending_at = None;
                events.push(DetectorEvent::Decision {
                    t,
                    confidence: alarm.confidence,
                    decision: Decision::RejuvenateNow,
                });
            }
        }
        events
    }

    /// Raises an alarm when the active alerts match a rule stronger than
    /// the current alarm.
    fn evaluate_alarm(&mut self, t: f64) -> Vec<DetectorEvent> {
        let alerts: Vec<AgingAlert> = self.alerts.values().cloned().collect();
        let Some(alarm) = fuse_with(&alerts, &self.cfg.rules, t, self.cfg.ttaf_source) else {
            return Vec::new();
        };
        if self
            .alarm
            .as_ref()
            .is_some_and(|a| a.confidence >= alarm.confidence)
        {
            return Vec::new();
        }
        let decision = schedule(&alarm, &self.cfg.policy, &self.load, t);
        self.pending_at = match decision {
            Decision::RejuvenateAt { at } => Some(at),
            _ => None,
        };
        let confidence = alarm.confidence;
        self.alarm = Some(alarm.clone());
        vec![
            DetectorEvent::Alarm { t, alarm },
            DetectorEvent::Decision {
                t,
                confidence,
                decision,
            },
        ]
    }
}

/// Replays every sample of `set` in time order through a fresh detector.
pub fn run_detector(set: &IndicatorSet, cfg: &DetectorConfig) -> Result<Vec<DetectorEvent>, DetectorError> {
    let mut detector = Detector::new(cfg.clone())?;
    let mut samples: Vec<(f64, &str, f64)> = set
        .iter()
        .flat_map(|s| s.samples().iter().map(move |&(t, v)| (t, s.name(), v)))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let mut events = Vec::new();
    for (t, name, v) in samples {
        events.extend(detector.ingest(name, t, v)?);
    }
    Ok(events)
}

/// Alerts raised while replaying `set`.
pub fn detect(set: &IndicatorSet, cfg: &DetectorConfig) -> Result<Vec<AgingAlert>, DetectorError> {
    Ok(run_detector(set, cfg)?
        .into_iter()
        .filter_map(|e| match e {
            DetectorEvent::Alert { alert, .. } => Some(alert),
            _ => None,
        })
        .collect())
}

/// Indicators with an alert raised in `events`.
pub fn alerted_indicators(events: &[DetectorEvent]) -> BTreeSet<String> {
    events
        .iter()
        .filter_map(|e| match e {
            DetectorEvent::Alert { alert, .. } => Some(alert.indicator.clone()),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alert(name: &str, ttaf: Option<f64>) -> AgingAlert {
        AgingAlert {
            indicator: name.into(),
            first_seen: 0.0,
            persistence_s: 600.0,
            slope: 0.01,
            p_value: 0.001,
            current_level: 0.0,
            ttaf_s: ttaf,
            raised_at: 0.0,
        }
    }

    fn alarm(ttaf: Option<f64>) -> AgingAlarm {
        AgingAlarm {
            confidence: Confidence::VeryHigh,
            contributing_alerts: vec![],
            ttaf_s: ttaf,
            raised_at: 0.0,
        }
    }

    #[test]
    fn launch_time_and_pss_give_very_high() {
        let alerts = [alert("launch_time:com.a.Main", Some(100.0)), alert("pss:system_server", None)];
        let alarm = fuse(&alerts, &default_rules(), 5.0).unwrap();
        assert_eq!(alarm.confidence, Confidence::VeryHigh);
        assert_eq!(alarm.ttaf_s, Some(100.0));
        assert_eq!(alarm.contributing_alerts.len(), 2);
    }

    #[test]
    fn single_alert_no_alarm() {
        assert!(fuse(&[alert("pss:system_server", None)], &default_rules(), 0.0).is_none());
    }

    #[test]
    fn strongest_matching_rule_wins() {
        let rules = vec![
            AlarmRule::new(["pss:*"], Confidence::Low).unwrap(),
            AlarmRule::new(["pss:*", "free_mem"], Confidence::High).unwrap(),
        ];
        let one = fuse(&[alert("pss:x", None)], &rules, 0.0).unwrap();
        assert_eq!(one.confidence, Confidence::Low);
        let two = fuse(&[alert("pss:x", None), alert("free_mem", None)], &rules, 0.0).unwrap();
        assert_eq!(two.confidence, Confidence::High);
    }

    #[test]
    fn empty_rule_rejected() {
        assert!(AlarmRule::new(Vec::<String>::new(), Confidence::Low).is_err());
    }

    #[test]
    fn ttaf_examples() {
        assert!((0.003f64 * 21600.0 - 64.8).abs() < 1e-12);
        let ttaf = estimate_ttaf(0.0, 0.003, 200.0).unwrap();
        assert!((ttaf - 66_666.666_666_666_67).abs() < 1e-6);
        assert_eq!(estimate_ttaf(0.0, 0.0, 200.0), None);
        assert_eq!(estimate_ttaf(0.0, -1.0, 200.0), None);
        assert_eq!(estimate_ttaf(250.0, 1.0, 200.0), Some(0.0));
        let a = estimate_ttaf(20.0, 0.004, 200.0).unwrap();
        let b = estimate_ttaf(20.0, 0.008, 200.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-9);
    }

    #[test]
    fn policies() {
        let high = LoadTimeline::constant(LoadLevel::High);
        let mut policy = SchedulerPolicy {
            mode: PolicyMode::Immediate,
            ..SchedulerPolicy::default()
        };
        assert_eq!(schedule(&alarm(Some(1e4)), &policy, &high, 0.0), Decision::RejuvenateNow);
        policy.mode = PolicyMode::WarnOnly;
        assert_eq!(schedule(&alarm(Some(1e4)), &policy, &high, 0.0), Decision::Warn);
        policy.mode = PolicyMode::Postpone;
        policy.safety_margin_s = 2000.0;
        assert_eq!(
            schedule(&alarm(Some(10_000.0)), &policy, &high, 0.0),
            Decision::RejuvenateAt { at: 8000.0 }
        );
        let drop = LoadTimeline::from_changes(vec![(0.0, LoadLevel::High), (3000.0, LoadLevel::Low)]);
        assert_eq!(
            schedule(&alarm(Some(10_000.0)), &policy, &drop, 0.0),
            Decision::RejuvenateAt { at: 3000.0 }
        );
        let low = LoadTimeline::constant(LoadLevel::Low);
        assert_eq!(schedule(&alarm(Some(10_000.0)), &policy, &low, 0.0), Decision::RejuvenateNow);
        assert_eq!(schedule(&alarm(None), &policy, &high, 0.0), Decision::Warn);
    }

    #[test]
    fn below_min_confidence_only_warns() {
        let policy = SchedulerPolicy {
            mode: PolicyMode::Immediate,
            min_confidence: Confidence::VeryHigh,
            ..SchedulerPolicy::default()
        };
        let mut a = alarm(Some(100.0));
        a.confidence = Confidence::High;
        assert_eq!(schedule(&a, &policy, &LoadTimeline::default(), 0.0), Decision::Warn);
    }

    #[test]
    fn load_classification() {
        let th = LoadThresholds::default();
        assert_eq!(th.classify(0.1), LoadLevel::Low);
        assert_eq!(th.classify(0.5), LoadLevel::Medium);
        assert_eq!(th.classify(0.9), LoadLevel::High);
        assert!(LoadLevel::Low < LoadLevel::High);
    }

    #[test]
    fn pattern_lookup_prefers_exact_then_longest() {
        let map: BTreeMap<String, f64> = [
            ("launch_time:*".to_string(), 1.0),
            ("launch_time:com.a*".to_string(), 2.0),
            ("launch_time:com.a.Main".to_string(), 3.0),
        ]
        .into();
        assert_eq!(lookup(&map, "launch_time:com.a.Main"), Some(&3.0));
        assert_eq!(lookup(&map, "launch_time:com.a.Other"), Some(&2.0));
        assert_eq!(lookup(&map, "launch_time:org.b"), Some(&1.0));
        assert_eq!(lookup(&map, "pss:x"), None);
    }

    fn cfg(window: usize, persistence: f64) -> DetectorConfig {
        DetectorConfig {
            window,
            min_persistence_s: persistence,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn persistence_gate() {
        // Linear drift sampled every 10 s; the first significant window ends at t = 90.
        let mut d = Detector::new(cfg(10, 100.0)).unwrap();
        let mut raised = None;
        for i in 0..40 {
            let t = i as f64 * 10.0;
            for e in d.ingest("launch_time:a", t, 400.0 + t).unwrap() {
                if let DetectorEvent::Alert { alert, .. } = e {
                    raised.get_or_insert(alert);
                }
            }
        }
        let alert = raised.unwrap();
        assert_eq!(alert.first_seen, 90.0);
        assert_eq!(alert.raised_at, 190.0);
        assert!(alert.persistence_s >= 100.0);
    }

    #[test]
    fn short_trend_raises_nothing() {
        let mut d = Detector::new(cfg(10, 1000.0)).unwrap();
        for i in 0..60 {
            let t = i as f64 * 10.0;
            assert!(d.ingest("launch_time:a", t, t).unwrap().is_empty());
        }
    }

    #[test]
    fn flat_series_raises_nothing() {
        let mut d = Detector::new(cfg(10, 0.0)).unwrap();
        for i in 0..100 {
            let v = if i % 2 == 0 { 400.0 } else { 401.0 };
            assert!(d.ingest("launch_time:a", i as f64, v).unwrap().is_empty());
        }
    }

    #[test]
    fn free_memory_degrades_downwards() {
        let mut d = Detector::new(cfg(10, 0.0)).unwrap();
        let mut alerts = 0;
        for i in 0..20 {
            let events = d.ingest("free_mem", i as f64, 1e9 - i as f64 * 1e6).unwrap();
            alerts += events.iter().filter(|e| matches!(e, DetectorEvent::Alert { .. })).count();
        }
        assert_eq!(alerts, 1);
        let a = &d.status().active_alerts[0];
        assert!(a.current_level > 0.0);
    }

    #[test]
    fn alarm_and_decision_from_stream() {
        let mut c = cfg(10, 0.0);
        c.policy.mode = PolicyMode::Immediate;
        let mut d = Detector::new(c).unwrap();
        let mut events = Vec::new();
        for i in 0..15 {
            let t = i as f64 * 10.0;
            events.extend(d.ingest("launch_time:a", t, 400.0 + 0.5 * t).unwrap());
            events.extend(d.ingest("pss:system_server", t + 1.0, 8e7 + 1e3 * t).unwrap());
        }
        let decisions: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                DetectorEvent::Decision { decision, .. } => Some(*decision),
                _ => None,
            })
            .collect();
        assert_eq!(decisions, vec![Decision::RejuvenateNow]);
        let alarm = d.status().alarm.unwrap();
        // Level 0.5 ms/s drift, window median 20 ms above baseline at t = 140.
        assert!(alarm.ttaf_s.unwrap() > 0.0);
    }

    #[test]
    fn reset_clears_state() {
        let mut d = Detector::new(cfg(10, 0.0)).unwrap();
        for i in 0..20 {
            d.ingest("launch_time:a", i as f64, i as f64).unwrap();
        }
        assert!(!d.status().active_alerts.is_empty());
        d.reset(20.0);
        assert!(d.status().active_alerts.is_empty());
        assert_eq!(d.baseline("launch_time:a"), None);
        for i in 20..29 {
            assert!(d.ingest("launch_time:a", i as f64, i as f64).unwrap().is_empty());
        }
    }

    #[test]
    fn postponed_decision_fires_on_low_load() {
        let mut c = cfg(10, 0.0);
        c.policy = SchedulerPolicy {
            mode: PolicyMode::Postpone,
            safety_margin_s: 0.0,
            ..SchedulerPolicy::default()
        };
        let mut d = Detector::new(c).unwrap();
        d.ingest("load:cpu", 0.0, 0.9).unwrap();
        let mut decisions = Vec::new();
        for i in 0..15 {
            let t = i as f64 * 10.0;
            for e in d
                .ingest("launch_time:a", t, 400.0 + 0.1 * t)
                .unwrap()
                .into_iter()
                .chain(d.ingest("pss:system_server", t + 1.0, 1e3 * t).unwrap())
            {
                if let DetectorEvent::Decision { t, decision, .. } = e {
                    decisions.push((t, decision));
                }
            }
        }
        assert!(matches!(decisions[0].1, Decision::RejuvenateAt { .. }));
        let now = d.ingest("load:cpu", 200.0, 0.1).unwrap();
        assert!(matches!(
            now.as_slice(),
            [DetectorEvent::Decision {
                decision: Decision::RejuvenateNow,
                ..
            }]
        ));
    }

    #[test]
    fn config_round_trip_toml() {
        let text = r#"
window = 20
alpha = 0.01
min_persistence_s = 300.0

[[rules]]
required_indicators = ["launch_time:*", "pss:system_server"]
confidence = "very_high"

[[rules]]
required_indicators = ["free_mem"]
confidence = "low"

[thresholds]
"launch_time:*" = 200.0

[policy]
mode = "postpone"
safety_margin_s = 900.0
load_gate = "medium"
"#;
        let cfg = DetectorConfig::from_toml_str(text, "inline").unwrap();
        assert_eq!(cfg.window, 20);
        assert_eq!(cfg.rules.len(), 2);
        assert_eq!(cfg.policy.mode, PolicyMode::Postpone);
        assert_eq!(cfg.policy.load_gate, LoadLevel::Medium);
        assert_eq!(cfg.threshold("launch_time:x"), Some(200.0));
        assert!(DetectorConfig::from_toml_str("window = 2", "inline").is_err());
        assert!(DetectorConfig::from_toml_str("bogus = 1", "inline").is_err());
    }

    #[test]
    fn event_log_is_json_lines() {
        let events = vec![
            DetectorEvent::Reset { t: 1.0 },
            DetectorEvent::Decision {
                t: 2.0,
                confidence: Confidence::VeryHigh,
                decision: Decision::RejuvenateAt { at: 5.0 },
            },
        ];
        let mut buf = Vec::new();
        write_event_log(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"event":"reset","t":1.0}"#);
        assert_eq!(
            lines[1],
            r#"{"event":"decision","t":2.0,"confidence":"very_high","decision":{"action":"rejuvenate_at","at":5.0}}"#
        );
    }
}
