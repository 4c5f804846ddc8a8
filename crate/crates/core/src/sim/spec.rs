//! Experiment spec files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::detector::{DetectorConfig, PolicyMode, SchedulerPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerSpec {
    /// Field label inside the owning service, for reports only.
    pub field: String,
    pub class_name: String,
    /// Mean elements added per second of workload.
    #[serde(default)]
    pub growth_rate: f64,
    pub element_size: u64,
    pub element_class: String,
    #[serde(default = "yes")]
    pub flush_on_rejuvenate: bool,
    #[serde(default)]
    pub initial_elements: u64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub name: String,
    pub class_name: String,
    #[serde(default)]
    pub registered_rejuvenable: bool,
    #[serde(default)]
    pub containers: Vec<ContainerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub name: String,
    pub base_lt_ms: f64,
    /// Launch-time milliseconds added per byte of container bloat.
    pub bloat_coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchTimeSpec {
    pub noise_sd_ms: f64,
    /// Slow growth of launch time that only a reboot undoes.
    pub drift_ms_per_s: f64,
}

impl Default for LaunchTimeSpec {
    fn default() -> Self {
        LaunchTimeSpec {
            noise_sd_ms: 8.0,
            drift_ms_per_s: 0.0003,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AppSwitch,
    Navigation,
    SingleTouch,
    Swipe,
    MultiTouch,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::AppSwitch,
        EventKind::Navigation,
        EventKind::SingleTouch,
        EventKind::Swipe,
        EventKind::MultiTouch,
    ];

    /// Relative container growth caused by one event of this kind; the
    /// factors average to one over the uniform mix.
    pub fn growth_factor(self) -> f64 {
        match self {
            EventKind::AppSwitch => 1.4,
            EventKind::Navigation => 1.0,
            EventKind::SingleTouch => 0.6,
            EventKind::Swipe => 0.8,
            EventKind::MultiTouch => 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Mean gap between user events; gaps are exponential.
    pub event_period_s: f64,
    /// Probability of each event kind, in [`EventKind::ALL`] order.
    pub mix: [f64; 5],
    pub launch_kill_period_s: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            event_period_s: 1.0,
            mix: [0.2; 5],
            launch_kill_period_s: 10.0,
        }
    }
}

/// Scripted CPU utilization from `at_s` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadPoint {
    pub at_s: f64,
    pub cpu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    #[serde(default)]
    pub rejuvenated_services: BTreeSet<String>,
    /// Defaults to the immediate policy when services are rejuvenated.
    #[serde(default)]
    pub policy: Option<SchedulerPolicy>,
    #[serde(default)]
    pub reboot_period_s: Option<f64>,
    #[serde(default = "default_downtime")]
    pub reboot_downtime_s: f64,
}

fn default_downtime() -> f64 {
    120.0
}

impl ExperimentSpec {
    pub fn policy(&self) -> SchedulerPolicy {
        self.policy.unwrap_or(SchedulerPolicy {
            mode: if self.rejuvenated_services.is_empty() {
                PolicyMode::WarnOnly
            } else {
                PolicyMode::Immediate
            },
            ..SchedulerPolicy::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Heap snapshot period; zero disables snapshots.
    #[serde(default = "default_snapshot_period")]
    pub snapshot_period_s: f64,
    #[serde(default = "default_sample_period")]
    pub sample_period_s: f64,
    /// Launch-time increase over the healthy level counted as a failure.
    #[serde(default = "default_threshold")]
    pub failure_threshold_ms: f64,
    #[serde(default = "default_pause")]
    pub pause_ms: u64,
    /// Share of a container's elements removed by a flush, oldest first.
    #[serde(default = "default_flush_fraction")]
    pub flush_fraction: f64,
    #[serde(default = "default_base_pss")]
    pub base_pss_bytes: f64,
    #[serde(default = "default_total_mem")]
    pub total_mem_bytes: f64,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    /// Restricts flushing to the containers named (`class@id`) in a list
    /// produced by the candidacy analysis; relative to the spec file.
    #[serde(default)]
    pub rejuvenation_list: Option<PathBuf>,
    #[serde(default)]
    pub record_requests: bool,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub launch_time: LaunchTimeSpec,
    #[serde(default)]
    pub load: Vec<LoadPoint>,
    #[serde(default = "default_sim_detector")]
    pub detector: DetectorConfig,
    pub activities: Vec<ActivitySpec>,
    pub services: Vec<ServiceSpec>,
    pub experiments: Vec<ExperimentSpec>,
}

fn default_duration() -> f64 {
    21_600.0
}
fn default_snapshot_period() -> f64 {
    3600.0
}
fn default_sample_period() -> f64 {
    60.0
}
fn default_threshold() -> f64 {
    200.0
}
fn default_pause() -> u64 {
    1
}
fn default_flush_fraction() -> f64 {
    1.0
}
fn default_base_pss() -> f64 {
    80.0e6
}
fn default_total_mem() -> f64 {
    2.0e9
}
fn default_baseline() -> String {
    "EXP1".into()
}

/// Detector settings used inside simulations unless the spec overrides them.
pub fn default_sim_detector() -> DetectorConfig {
    DetectorConfig {
        window: 30,
        min_persistence_s: 300.0,
        ..DetectorConfig::default()
    }
}

impl SimSpec {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, SimError> {
        let spec: SimSpec = toml::from_str(text).map_err(|e| SimError::Config(format!("{origin}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, SimError> {
        let spec: SimSpec =
            serde_json::from_str(text).map_err(|e| SimError::Config(format!("{origin}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads TOML, or JSON when the file name ends in `.json`. A relative
    /// `rejuvenation_list` is resolved against the spec's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{origin}: {e}")))?;
        let mut spec = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text, &origin)?
        } else {
            Self::from_toml_str(&text, &origin)?
        };
        if let (Some(list), Some(dir)) = (&spec.rejuvenation_list, path.parent()) {
            if list.is_relative() {
                spec.rejuvenation_list = Some(dir.join(list));
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        if !(self.sample_period_s > 0.0) {
            return bad("sample_period_s must be positive".into());
        }
        if !(self.snapshot_period_s >= 0.0) {
            return bad("snapshot_period_s must be non-negative".into());
        }
        if !(self.failure_threshold_ms > 0.0) {
            return bad("failure_threshold_ms must be positive".into());
        }
        if !(self.flush_fraction > 0.0 && self.flush_fraction <= 1.0) {
            return bad("flush_fraction must lie in (0, 1]".into());
        }
        let w = &self.workload;
        if !(w.event_period_s > 0.0) || !(w.launch_kill_period_s > 0.0) {
            return bad("workload periods must be positive".into());
        }
        if w.mix.iter().any(|p| !(*p >= 0.0)) || (w.mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("workload mix must be non-negative and sum to 1".into());
        }
        if !(self.launch_time.noise_sd_ms >= 0.0) {
            return bad("noise_sd_ms must be non-negative".into());
        }
        if self.activities.is_empty() {
            return bad("at least one activity is required".into());
        }
        let mut names = BTreeSet::new();
        for a in &self.activities {
            if !names.insert(a.name.as_str()) {
                return bad(format!("duplicate activity {}", a.name));
            }
            if !(a.base_lt_ms > 0.0) || !(a.bloat_coefficient >= 0.0) {
                return bad(format!("activity {}: base_lt_ms must be positive, bloat_coefficient non-negative", a.name));
            }
        }
        let mut services = BTreeSet::new();
        for s in &self.services {
            if !services.insert(s.name.as_str()) {
                return bad(format!("duplicate service {}", s.name));
            }
            for c in &s.containers {
                if !(c.growth_rate >= 0.0) {
                    return bad(format!("{}.{}: growth_rate must be non-negative", s.name, c.field));
                }
            }
        }
        if self.experiments.is_empty() {
            return bad("at least one experiment is required".into());
        }
        let mut ids = BTreeSet::new();
        for e in &self.experiments {
            if !ids.insert(e.id.as_str()) {
                return bad(format!("duplicate experiment {}", e.id));
            }
            for name in &e.rejuvenated_services {
                match self.services.iter().find(|s| &s.name == name) {
                    None => return bad(format!("experiment {}: unknown service {name}", e.id)),
                    Some(s) if !s.registered_rejuvenable => {
                        return bad(format!("experiment {}: service {name} is not registered for rejuvenation", e.id))
                    }
                    Some(_) => {}
                }
            }
            if matches!(e.reboot_period_s, Some(p) if !(p > e.reboot_downtime_s && e.reboot_downtime_s >= 0.0)) {
                return bad(format!("experiment {}: reboot period must exceed the downtime", e.id));
            }
        }
        self.detector
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn experiment(&self, id: &str) -> Option<&ExperimentSpec> {
        self.experiments.iter().find(|e| e.id == id)
    }
}
