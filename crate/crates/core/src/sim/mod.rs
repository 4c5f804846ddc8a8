//! Simulation of a long-running service process that ages through bloating
//! containers, and of the rejuvenation experiments run against it.
//!
//! A spec lists the services with their containers, the activities whose
//! launch time is measured, the workload, and a set of experiments. Each
//! experiment runs the same seeded workload and differs only in which
//! services it micro-rejuvenates, under which policy, or whether the whole
//! device is rebooted periodically.
//!
//! Launch time is modeled as
//!
//! ```text
//! LT = base + coefficient · bloat_bytes + drift · uptime + noise
//! ```
//!
//! floored at half the base, where `bloat_bytes` is the total size of all
//! container elements and the drift is only undone by a reboot.

mod engine;
mod gains;
mod service;
mod spec;

use thiserror::Error;

pub use engine::{
    container_object_id, run, PauseWindow, RequestAudit, RequestRecord, SimEvent, Trace, TraceEvent,
    PROCESS_NAME,
};
pub use gains::{
    compute_gains, gain_lt, gain_ttaf, launch_time_slopes, lt_increase, mean_finite, summarize,
    ttaf_s, ActivityGain, ComparisonTable, ExperimentComparison, RunIndicators,
};
pub use service::{rejuvenate_service, Element, FlushEvent, SimContainer, SimService, Submission};
pub use spec::{
    default_sim_detector, ActivitySpec, ContainerSpec, EventKind, ExperimentSpec, LaunchTimeSpec,
    LoadPoint, ServiceSpec, SimSpec, WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid spec: {0}")]
    Config(String),
    #[error("service {0} is not registered for rejuvenation")]
    NotRejuvenable(String),
    #[error("activity {0} is missing from the treated run")]
    MissingActivity(String),
    #[error("baseline experiment {0} was not run")]
    MissingBaseline(String),
    #[error("trend estimation failed: {0}")]
    Trend(String),
    #[error("simulation invariant violated: {0}")]
    Invariant(String),
}

/// Runs every experiment of `spec` with `seed`, one thread per experiment.
pub fn run_all(spec: &SimSpec, seed: u64) -> Result<Vec<Trace>, SimError> {
    spec.validate()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .experiments
            .iter()
            .map(|e| scope.spawn(move || run(spec, &e.id, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

/// Comparison of every run in `traces` against the spec's baseline.
pub fn compare(spec: &SimSpec, traces: &[Trace]) -> Result<ComparisonTable, SimError> {
    let runs: Vec<RunIndicators> = traces
        .iter()
        .map(|t| RunIndicators {
            experiment_id: t.experiment_id.clone(),
            indicators: t.indicator_set(),
        })
        .collect();
    summarize(&runs, &spec.baseline, spec.duration_s, spec.failure_threshold_ms)
}
