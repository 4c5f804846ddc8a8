//! Deterministic discrete-event loop.
//!
//! Simulated time is kept in integer milliseconds. Every random draw comes
//! from a ChaCha stream dedicated to one purpose (workload, launches,
//! memory noise), so experiments that share a seed see the same workload
//! whatever rejuvenation they perform.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::service::{rejuvenate_service, SimContainer, SimService, Submission};
use super::spec::{EventKind, ExperimentSpec, SimSpec};
use super::SimError;
use crate::candidacy::RejuvenationList;
use crate::detector::{Decision, Detector, DetectorEvent};
use crate::heap::{HeapSnapshot, ObjectId, ObjectRecord};
use crate::indicators::{IndicatorSample, IndicatorSet};

pub const PROCESS_NAME: &str = "system_server";
const PSS_NOISE_SD: f64 = 4096.0;
const OTHER_MEM_BYTES: f64 = 1.0e9;

/// Object id of the `index`-th container (in spec order) in emitted snapshots.
pub fn container_object_id(index: usize) -> u64 {
    1000 + index as u64
}

fn element_object_id(container_index: usize, serial: u64) -> u64 {
    (container_index as u64 + 1) * 1_000_000_000 + serial
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Rejuvenation {
        t: f64,
        services: Vec<String>,
        removed_elements: usize,
        /// Indicator samples recorded before this event.
        sample_seq: usize,
    },
    PauseEnd {
        t: f64,
        service: String,
        drained: usize,
    },
    Reboot {
        t: f64,
        downtime_s: f64,
        sample_seq: usize,
    },
    Snapshot {
        t: f64,
        snapshot_id: String,
        bloat_bytes: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceEvent {
    Sim(SimEvent),
    Detector(DetectorEvent),
}

/// Request bookkeeping, checked after every simulated event.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestAudit {
    pub arrived: u64,
    pub processed: u64,
    pub queued: u64,
    pub max_queued: u64,
    pub checks: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub service: usize,
    pub arrived_ms: u64,
    pub processed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseWindow {
    pub service: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub experiment_id: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub failure_threshold_ms: f64,
    pub indicators: Vec<IndicatorSample>,
    pub snapshots: Vec<HeapSnapshot>,
    /// Total container bytes when each snapshot was taken.
    pub snapshot_bloat: Vec<u64>,
    pub events: Vec<TraceEvent>,
    pub audit: RequestAudit,
    /// Filled only when the spec sets `record_requests`.
    pub requests: Vec<RequestRecord>,
    pub pauses: Vec<PauseWindow>,
    pub rejuvenation_times: Vec<f64>,
    pub reboot_times: Vec<f64>,
}

impl Trace {
    pub fn indicator_set(&self) -> IndicatorSet {
        let mut set = IndicatorSet::new();
        for s in &self.indicators {
            set.push(&s.indicator, s.timestamp_s, s.value)
                .expect("simulator emits increasing timestamps");
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    End,
    PauseEnd(usize),
    Reboot,
    BootComplete,
    Rejuvenate(u64),
    Snapshot(u64),
    Sample,
    Load(usize),
    Launch,
    Workload,
}

struct Engine<'a> {
    spec: &'a SimSpec,
    exp: &'a ExperimentSpec,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    services: Vec<SimService>,
    rejuvenated: Vec<usize>,
    allowed: Option<BTreeSet<String>>,
    detector: Detector,
    workload_rng: ChaCha8Rng,
    launch_rng: ChaCha8Rng,
    memory_rng: ChaCha8Rng,
    gap: Exp<f64>,
    lt_noise: Option<Normal<f64>>,
    pss_noise: Normal<f64>,
    boot_ms: u64,
    down_until: Option<u64>,
    next_request: u64,
    pending_rejuvenation: u64,
    pending_arrivals: Vec<Vec<(u64, u64)>>,
    trace: Trace,
}

/// Runs one experiment of `spec` with `seed`.
pub fn run(spec: &SimSpec, experiment_id: &str, seed: u64) -> Result<Trace, SimError> {
    spec.validate()?;
    let exp = spec
        .experiment(experiment_id)
        .ok_or_else(|| SimError::Config(format!("unknown experiment {experiment_id}")))?;
    let allowed = match &spec.rejuvenation_list {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
            let list = RejuvenationList::from_json_str(&text)
                .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
            Some(list.containers.into_iter().collect())
        }
        None => None,
    };
    let mut engine = Engine::new(spec, exp, seed, allowed)?;
    engine.run()?;
    Ok(engine.trace)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

fn to_ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

impl<'a> Engine<'a> {
    fn new(
        spec: &'a SimSpec,
        exp: &'a ExperimentSpec,
        seed: u64,
        allowed: Option<BTreeSet<String>>,
    ) -> Result<Self, SimError> {
        let services: Vec<SimService> = spec.services.iter().map(SimService::new).collect();
        let rejuvenated = spec
            .services
            .iter()
            .enumerate()
            .filter(|(_, s)| exp.rejuvenated_services.contains(&s.name))
            .map(|(i, _)| i)
            .collect();
        let mut detector_cfg = spec.detector.clone();
        detector_cfg.policy = exp.policy();
        let detector = Detector::new(detector_cfg).map_err(|e| SimError::Config(e.to_string()))?;
        let sd = spec.launch_time.noise_sd_ms;
        let n_services = services.len();
        Ok(Engine {
            spec,
            exp,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            services,
            rejuvenated,
            allowed,
            detector,
            workload_rng: stream(seed, 1),
            launch_rng: stream(seed, 2),
            memory_rng: stream(seed, 3),
            gap: Exp::new(1.0 / spec.workload.event_period_s).expect("positive rate"),
            lt_noise: (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite sd")),
            pss_noise: Normal::new(0.0, PSS_NOISE_SD).expect("finite sd"),
            boot_ms: 0,
            down_until: None,
            next_request: 0,
            pending_rejuvenation: 0,
            pending_arrivals: vec![Vec::new(); n_services],
            trace: Trace {
                experiment_id: exp.id.clone(),
                seed,
                horizon_s: spec.duration_s,
                failure_threshold_ms: spec.failure_threshold_ms,
                indicators: Vec::new(),
                snapshots: Vec::new(),
                snapshot_bloat: Vec::new(),
                events: Vec::new(),
                audit: RequestAudit::default(),
                requests: Vec::new(),
                pauses: Vec::new(),
                rejuvenation_times: Vec::new(),
                reboot_times: Vec::new(),
            },
        })
    }

    fn at(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((t, self.seq, ev)));
    }

    fn run(&mut self) -> Result<(), SimError> {
        let end = to_ms(self.spec.duration_s);
        self.at(end, Ev::End);
        self.at(0, Ev::Sample);
        if self.spec.snapshot_period_s > 0.0 {
            self.at(0, Ev::Snapshot(0));
        }
        self.at(to_ms(self.spec.workload.launch_kill_period_s), Ev::Launch);
        let first = self.workload_gap();
        self.at(first, Ev::Workload);
        if let Some(p) = self.exp.reboot_period_s {
            self.at(to_ms(p), Ev::Reboot);
        }
        for (i, p) in self.spec.load.iter().enumerate() {
            self.at(to_ms(p.at_s), Ev::Load(i));
        }

        while let Some(Reverse((t, _, ev))) = self.queue.pop() {
            self.now = t;
            if ev == Ev::End {
                break;
            }
            self.handle(ev)?;
            self.audit();
        }
        if self.trace.audit.violations > 0 {
            return Err(SimError::Invariant(format!(
                "request conservation violated {} times",
                self.trace.audit.violations
            )));
        }
        Ok(())
    }

    fn workload_gap(&mut self) -> u64 {
        let g = self.gap.sample(&mut self.workload_rng);
        to_ms(g).max(1)
    }

    fn is_down(&self) -> bool {
        self.down_until.is_some_and(|u| self.now < u)
    }

    fn bloat_bytes(&self) -> u64 {
        self.services.iter().map(SimService::bytes).sum()
    }

    fn record(&mut self, name: &str, value: f64) -> Result<(), SimError> {
        let t = secs(self.now);
        self.trace.indicators.push(IndicatorSample {
            timestamp_s: t,
            indicator: name.to_string(),
            value,
        });
        let events = self
            .detector
            .ingest(name, t, value)
            .map_err(|e| SimError::Invariant(e.to_string()))?;
        for e in events {
            let decision = match &e {
                DetectorEvent::Decision { decision, .. } => Some(*decision),
                _ => None,
            };
            self.trace.events.push(TraceEvent::Detector(e));
            match decision {
                Some(Decision::RejuvenateNow) => self.rejuvenate()?,
                Some(Decision::RejuvenateAt { at }) => {
                    self.pending_rejuvenation += 1;
                    let when = to_ms(at).max(self.now);
                    self.at(when, Ev::Rejuvenate(self.pending_rejuvenation));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::End => {}
            Ev::Workload => {
                let next = self.now + self.workload_gap();
                self.at(next, Ev::Workload);
                if self.is_down() {
                    return Ok(());
                }
                let kind = self.draw_kind();
                let expected = self.spec.workload.event_period_s * kind.growth_factor();
                let now = self.now;
                for svc in &mut self.services {
                    for c in &mut svc.containers {
                        c.grow(c.growth_rate * expected, now);
                    }
                }
                if !self.services.is_empty() {
                    let s = self.workload_rng.gen_range(0..self.services.len());
                    self.arrive(s);
                }
            }
            Ev::Launch => {
                let next = self.now + to_ms(self.spec.workload.launch_kill_period_s);
                self.at(next, Ev::Launch);
                let a = self.launch_rng.gen_range(0..self.spec.activities.len());
                let noise = match &self.lt_noise {
                    Some(n) => n.sample(&mut self.launch_rng),
                    None => 0.0,
                };
                if self.is_down() {
                    return Ok(());
                }
                let act = &self.spec.activities[a];
                let uptime = secs(self.now.saturating_sub(self.boot_ms));
                let lt = act.base_lt_ms
                    + act.bloat_coefficient * self.bloat_bytes() as f64
                    + self.spec.launch_time.drift_ms_per_s * uptime
                    + noise;
                let lt = lt.max(act.base_lt_ms / 2.0);
                let name = format!("launch_time:{}", act.name);
                self.record(&name, lt)?;
            }
            Ev::Sample => {
                let next = self.now + to_ms(self.spec.sample_period_s);
                self.at(next, Ev::Sample);
                let noise = self.pss_noise.sample(&mut self.memory_rng);
                if self.is_down() {
                    return Ok(());
                }
                let pss = (self.spec.base_pss_bytes + self.bloat_bytes() as f64 + noise).round();
                let free = (self.spec.total_mem_bytes - pss - OTHER_MEM_BYTES).max(0.0);
                self.record(&format!("pss:{PROCESS_NAME}"), pss)?;
                self.record("free_mem", free)?;
            }
            Ev::Load(i) => {
                let cpu = self.spec.load[i].cpu;
                self.record("load:cpu", cpu)?;
            }
            Ev::Snapshot(k) => {
                let next = self.now + to_ms(self.spec.snapshot_period_s);
                if next < to_ms(self.spec.duration_s) {
                    self.at(next, Ev::Snapshot(k + 1));
                }
                self.snapshot(k);
            }
            Ev::Rejuvenate(generation) => {
                if generation == self.pending_rejuvenation {
                    self.rejuvenate()?;
                }
            }
            Ev::PauseEnd(s) => {
                if self.services[s].paused_until() == Some(self.now) {
                    self.resume(s);
                }
            }
            Ev::Reboot => self.reboot(),
            Ev::BootComplete => {
                self.down_until = None;
                self.boot_ms = self.now;
            }
        }
        Ok(())
    }

    fn draw_kind(&mut self) -> EventKind {
        let u: f64 = self.workload_rng.gen();
        let mut acc = 0.0;
        for (kind, p) in EventKind::ALL.iter().zip(self.spec.workload.mix) {
            acc += p;
            if u < acc {
                return *kind;
            }
        }
        EventKind::MultiTouch
    }

    fn arrive(&mut self, s: usize) {
        let id = self.next_request;
        self.next_request += 1;
        self.trace.audit.arrived += 1;
        match self.services[s].submit(id) {
            Submission::Processed => {
                self.trace.audit.processed += 1;
                if self.spec.record_requests {
                    self.trace.requests.push(RequestRecord {
                        id,
                        service: s,
                        arrived_ms: self.now,
                        processed_ms: self.now,
                    });
                }
            }
            Submission::Queued => {
                if self.spec.record_requests {
                    self.pending_arrivals[s].push((id, self.now));
                }
            }
        }
    }

    fn resume(&mut self, s: usize) {
        let drained = self.services[s].resume();
        self.trace.audit.processed += drained.len() as u64;
        if self.spec.record_requests {
            let arrivals = std::mem::take(&mut self.pending_arrivals[s]);
            debug_assert_eq!(arrivals.len(), drained.len());
            for ((id, arrived_ms), drained_id) in arrivals.into_iter().zip(&drained) {
                debug_assert_eq!(id, *drained_id);
                self.trace.requests.push(RequestRecord {
                    id: *drained_id,
                    service: s,
                    arrived_ms,
                    processed_ms: self.now,
                });
            }
        }
        self.trace.events.push(TraceEvent::Sim(SimEvent::PauseEnd {
            t: secs(self.now),
            service: self.services[s].name.clone(),
            drained: drained.len(),
        }));
    }

    fn audit(&mut self) {
        let queued: u64 = self.services.iter().map(|s| s.queued() as u64).sum();
        let a = &mut self.trace.audit;
        a.queued = queued;
        a.max_queued = a.max_queued.max(queued);
        a.checks += 1;
        if a.processed + queued != a.arrived {
            a.violations += 1;
        }
    }

    fn rejuvenate(&mut self) -> Result<(), SimError> {
        if self.rejuvenated.is_empty() {
            return Ok(());
        }
        let now = self.now;
        let mut removed = 0;
        let mut names = Vec::new();
        let firsts: Vec<usize> = self
            .services
            .iter()
            .scan(0, |acc, s| {
                let first = *acc;
                *acc += s.containers.len();
                Some(first)
            })
            .collect();
        for &s in &self.rejuvenated.clone() {
            let first = firsts[s];
            let allowed = self.allowed.clone();
            let select = move |i: usize, c: &SimContainer| match &allowed {
                Some(list) => list.contains(&format!("{}@{}", c.class_name, container_object_id(first + i))),
                None => c.flush_on_rejuvenate,
            };
            let event = rejuvenate_service(
                &mut self.services[s],
                now,
                self.spec.pause_ms,
                self.spec.flush_fraction,
                Some(&select),
            )?;
            removed += event.removed.iter().sum::<usize>();
            names.push(event.service.clone());
            self.trace.pauses.push(PauseWindow {
                service: s,
                start_ms: now,
                end_ms: event.pause_until_ms,
            });
            self.at(event.pause_until_ms, Ev::PauseEnd(s));
        }
        let t = secs(now);
        self.trace.rejuvenation_times.push(t);
        self.trace.events.push(TraceEvent::Sim(SimEvent::Rejuvenation {
            t,
            services: names,
            removed_elements: removed,
            sample_seq: self.trace.indicators.len(),
        }));
        let e = self.detector.reset(t);
        self.trace.events.push(TraceEvent::Detector(e));
        Ok(())
    }

    fn reboot(&mut self) {
        let period = self.exp.reboot_period_s.expect("reboot scheduled only with a period");
        self.at(self.now + to_ms(period), Ev::Reboot);
        // Requests held by a pause are served before shutdown.
        for s in 0..self.services.len() {
            if self.services[s].is_paused() {
                self.resume(s);
            }
        }
        let now = self.now;
        for svc in &mut self.services {
            for c in &mut svc.containers {
                c.reboot(now);
            }
        }
        let downtime = self.exp.reboot_downtime_s;
        let up = now + to_ms(downtime);
        self.down_until = Some(up);
        self.at(up, Ev::BootComplete);
        let t = secs(now);
        self.trace.reboot_times.push(t);
        self.trace.events.push(TraceEvent::Sim(SimEvent::Reboot {
            t,
            downtime_s: downtime,
            sample_seq: self.trace.indicators.len(),
        }));
        let e = self.detector.reset(t);
        self.trace.events.push(TraceEvent::Detector(e));
        self.pending_rejuvenation += 1;
    }

    fn snapshot(&mut self, k: u64) {
        let t = secs(self.now);
        let mut objects = Vec::new();
        let service_ids: Vec<u64> = (0..self.services.len() as u64).map(|s| 10 + s).collect();
        objects.push(ObjectRecord::new(1, "com.android.server.SystemServer", 256).with_refs(service_ids.clone()));
        let mut global = 0;
        for (svc, &sid) in self.services.iter().zip(&service_ids) {
            let first = global;
            let container_ids: Vec<u64> = (0..svc.containers.len()).map(|i| container_object_id(first + i)).collect();
            objects.push(ObjectRecord::new(sid, svc.class_name.clone(), 128).with_refs(container_ids.clone()));
            for (c, &cid) in svc.containers.iter().zip(&container_ids) {
                let element_ids: Vec<u64> = c.elements.iter().map(|e| element_object_id(global, e.serial)).collect();
                objects.push(ObjectRecord::new(cid, c.class_name.clone(), 40).with_refs(element_ids.iter().copied()));
                for (e, &eid) in c.elements.iter().zip(&element_ids) {
                    let mut rec = ObjectRecord::new(eid, c.element_class.clone(), c.element_size);
                    rec.created_at = Some(secs(e.created_at_ms));
                    rec.last_access = Some(secs(e.created_at_ms));
                    objects.push(rec);
                }
                global += 1;
            }
        }
        let id = format!("{}-{k:03}", self.exp.id);
        let snap = HeapSnapshot::new(id.clone(), t, PROCESS_NAME, vec![ObjectId(1)], objects)
            .expect("simulator builds consistent snapshots");
        let bloat = self.bloat_bytes();
        self.trace.snapshots.push(snap);
        self.trace.snapshot_bloat.push(bloat);
        self.trace.events.push(TraceEvent::Sim(SimEvent::Snapshot {
            t,
            snapshot_id: id,
            bloat_bytes: bloat,
        }));
    }
}
