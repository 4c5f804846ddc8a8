//! Selection of containers that are safe, useful targets for a flush.
//!
//! Each container tracked across a snapshot series is screened by six
//! criteria:
//!
//! | id | passes when |
//! |----|-------------|
//! | C1 | the immediate dominator is a regular object in every snapshot |
//! | C2 | retained size varies (σ > 0) and, by default, ends above where it started |
//! | C3 | at least one element lives at least `long_lifetime_s` |
//! | C4 | some element has been idle at least `idle_threshold_s` (skipped without access data) |
//! | C5 | every element class is white-listed (only when enabled) |
//! | C6 | no element class is black-listed (only when enabled) |
//!
//! A container is a rejuvenation candidate when no criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dominators::{compute_dominators, compute_retained, Dominator, DominatorTree, RetainedSizes};
use crate::heap::{display_name, find_containers, ContainerClassSet, HeapSnapshot, ObjectId, ObjectRecord, SnapshotSeries};

#[derive(Debug, Error)]
pub enum CandidacyError {
    #[error("series has {got} snapshots, at least {needed} required")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("invalid candidacy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidacyConfig {
    pub container_classes: ContainerClassSet,
    /// Disposable element classes.
    pub whitelist: Option<BTreeSet<String>>,
    /// Critical element classes.
    pub blacklist: Option<BTreeSet<String>>,
    pub use_whitelist: bool,
    pub use_blacklist: bool,
    pub min_snapshots: usize,
    /// When unset, an element counts as long-lived once it is seen in two
    /// consecutive snapshots (or its age reaches the shortest snapshot gap).
    pub long_lifetime_s: Option<f64>,
    pub idle_threshold_s: f64,
    pub require_net_growth: bool,
}

impl Default for CandidacyConfig {
    fn default() -> Self {
        CandidacyConfig {
            container_classes: ContainerClassSet::default(),
            whitelist: None,
            blacklist: None,
            use_whitelist: false,
            use_blacklist: false,
            min_snapshots: 3,
            long_lifetime_s: None,
            idle_threshold_s: 600.0,
            require_net_growth: true,
        }
    }
}

impl CandidacyConfig {
    pub fn validate(&self) -> Result<(), CandidacyError> {
        let invalid = |msg: &str| Err(CandidacyError::InvalidConfig(msg.to_string()));
        if self.min_snapshots < 2 {
            return invalid("min_snapshots must be at least 2");
        }
        if !(self.idle_threshold_s > 0.0) {
            return invalid("idle_threshold_s must be positive");
        }
        if matches!(self.long_lifetime_s, Some(t) if !(t > 0.0)) {
            return invalid("long_lifetime_s must be positive");
        }
        if self.use_whitelist && self.whitelist.is_none() {
            return invalid("use_whitelist is set but no whitelist was given");
        }
        if self.use_blacklist && self.blacklist.is_none() {
            return invalid("use_blacklist is set but no blacklist was given");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::C1,
        Criterion::C2,
        Criterion::C3,
        Criterion::C4,
        Criterion::C5,
        Criterion::C6,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            Criterion::C1 => "hidden inside a single dominator",
            Criterion::C2 => "growing size",
            Criterion::C3 => "holds a long-lived object",
            Criterion::C4 => "holds objects idle for a long time",
            Criterion::C5 => "holds only disposable classes",
            Criterion::C6 => "holds no critical classes",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// Not evaluated (disabled, or no data); does not block rejuvenation.
    Skipped,
}

/// Dominator trees and retained sizes for every snapshot of a series.
pub struct HeapAnalysis<'a> {
    series: &'a SnapshotSeries,
    trees: Vec<DominatorTree>,
    retained: Vec<RetainedSizes>,
}

impl<'a> HeapAnalysis<'a> {
    /// Snapshots are analyzed in parallel, one thread each.
    pub fn new(series: &'a SnapshotSeries) -> Self {
        let results: Vec<(DominatorTree, RetainedSizes)> = std::thread::scope(|scope| {
            let handles: Vec<_> = series
                .snapshots()
                .iter()
                .map(|snap| {
                    scope.spawn(move || {
                        let tree = compute_dominators(snap);
                        let retained = compute_retained(snap, &tree);
                        (tree, retained)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("dominator thread panicked"))
                .collect()
        });
        let (trees, retained) = results.into_iter().unzip();
        HeapAnalysis {
            series,
            trees,
            retained,
        }
    }

    pub fn series(&self) -> &SnapshotSeries {
        self.series
    }

    pub fn tree(&self, k: usize) -> &DominatorTree {
        &self.trees[k]
    }

    pub fn retained(&self, k: usize) -> &RetainedSizes {
        &self.retained[k]
    }
}

/// One container followed across every snapshot of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedContainer {
    pub object_id: ObjectId,
    pub class_name: String,
    pub retained: Vec<u64>,
    pub element_counts: Vec<usize>,
    pub inbound_counts: Vec<usize>,
}

impl TrackedContainer {
    pub fn object_name(&self) -> String {
        display_name(&self.class_name, self.object_id)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tracking {
    pub tracked: Vec<TrackedContainer>,
    /// Containers missing from at least one snapshot (`class@id`).
    pub transient: Vec<String>,
    /// Containers present throughout but unreachable somewhere (`class@id`).
    pub unreachable: Vec<String>,
}

/// Follows every container across the series by `(id, class)` identity.
pub fn track_containers(
    analysis: &HeapAnalysis<'_>,
    cfg: &CandidacyConfig,
) -> Result<Tracking, CandidacyError> {
    cfg.validate()?;
    let series = analysis.series();
    if series.len() < cfg.min_snapshots {
        return Err(CandidacyError::SeriesTooShort {
            needed: cfg.min_snapshots,
            got: series.len(),
        });
    }

    let per_snapshot: Vec<HashMap<(ObjectId, &str), (usize, usize)>> = series
        .snapshots()
        .iter()
        .map(|snap| {
            find_containers(snap, &cfg.container_classes)
                .into_iter()
                .map(|v| {
                    let class = snap.get(v.object_id).expect("found").class_name.as_str();
                    ((v.object_id, class), (v.element_count, v.inbound_count))
                })
                .collect()
        })
        .collect();

    let mut keys: BTreeSet<(ObjectId, &str)> = BTreeSet::new();
    for map in &per_snapshot {
        keys.extend(map.keys().copied());
    }

    let mut tracking = Tracking::default();
    for key in keys {
        let (id, class) = key;
        if !per_snapshot.iter().all(|m| m.contains_key(&key)) {
            tracking.transient.push(display_name(class, id));
            continue;
        }
        let retained: Option<Vec<u64>> = (0..series.len())
            .map(|k| analysis.retained(k).get(id))
            .collect();
        let Some(retained) = retained else {
            tracking.unreachable.push(display_name(class, id));
            continue;
        };
        let (element_counts, inbound_counts) = per_snapshot.iter().map(|m| m[&key]).unzip();
        tracking.tracked.push(TrackedContainer {
            object_id: id,
            class_name: class.to_string(),
            retained,
            element_counts,
            inbound_counts,
        });
    }
    Ok(tracking)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_criterion: BTreeMap<Criterion, Outcome>,
    pub rejuvenate: bool,
}

fn elements<'s>(snap: &'s HeapSnapshot, container: ObjectId) -> Vec<&'s ObjectRecord> {
    let Some(obj) = snap.get(container) else {
        return Vec::new();
    };
    let mut seen = HashSet::new();
    obj.refs
        .iter()
        .filter(|r| seen.insert(**r))
        .filter_map(|r| snap.get(*r))
        .collect()
}

pub fn mean_and_stddev(values: &[u64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

pub fn evaluate_criteria(
    container: &TrackedContainer,
    analysis: &HeapAnalysis<'_>,
    cfg: &CandidacyConfig,
) -> Evaluation {
    let snaps = analysis.series().snapshots();
    let id = container.object_id;
    let per_snapshot_elements: Vec<Vec<&ObjectRecord>> =
        snaps.iter().map(|s| elements(s, id)).collect();
    let mut per_criterion = BTreeMap::new();

    let c1 = (0..snaps.len())
        .all(|k| matches!(analysis.tree(k).dominator_of(id), Ok(Dominator::Object(_))));
    per_criterion.insert(Criterion::C1, pass_if(c1));

    let (_, stddev) = mean_and_stddev(&container.retained);
    let first = container.retained[0];
    let last = *container.retained.last().expect("non-empty");
    let c2 = stddev > 0.0 && (!cfg.require_net_growth || last > first);
    per_criterion.insert(Criterion::C2, pass_if(c2));

    per_criterion.insert(
        Criterion::C3,
        pass_if(has_long_lived_element(snaps, &per_snapshot_elements, cfg.long_lifetime_s)),
    );

    let last_ts = snaps.last().expect("non-empty").timestamp();
    let idle = per_snapshot_elements
        .last()
        .expect("non-empty")
        .iter()
        .filter_map(|e| e.last_access.map(|a| last_ts - a))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    per_criterion.insert(
        Criterion::C4,
        match idle {
            Some(max_idle) => pass_if(max_idle >= cfg.idle_threshold_s),
            None => Outcome::Skipped,
        },
    );

    let element_classes: BTreeSet<&str> = per_snapshot_elements
        .iter()
        .flatten()
        .map(|e| e.class_name.as_str())
        .collect();
    let c5 = match (&cfg.whitelist, cfg.use_whitelist) {
        (Some(list), true) => pass_if(element_classes.iter().all(|c| list.contains(*c))),
        _ => Outcome::Skipped,
    };
    per_criterion.insert(Criterion::C5, c5);
    let c6 = match (&cfg.blacklist, cfg.use_blacklist) {
        (Some(list), true) => pass_if(!element_classes.iter().any(|c| list.contains(*c))),
        _ => Outcome::Skipped,
    };
    per_criterion.insert(Criterion::C6, c6);

    let rejuvenate = per_criterion.values().all(|o| *o != Outcome::Fail);
    Evaluation {
        per_criterion,
        rejuvenate,
    }
}

fn pass_if(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn has_long_lived_element(
    snaps: &[HeapSnapshot],
    elements: &[Vec<&ObjectRecord>],
    threshold: Option<f64>,
) -> bool {
    let min_gap = snaps
        .windows(2)
        .map(|w| w[1].timestamp() - w[0].timestamp())
        .fold(f64::INFINITY, f64::min);
    let age_threshold = threshold.unwrap_or(min_gap);

    // Age from creation metadata.
    for (snap, elems) in snaps.iter().zip(elements) {
        for e in elems {
            if let Some(created) = e.created_at {
                if snap.timestamp() - created >= age_threshold {
                    return true;
                }
            }
        }
    }

    // Age from presence in consecutive snapshots.
    let mut run_start: HashMap<ObjectId, usize> = HashMap::new();
    for (k, elems) in elements.iter().enumerate() {
        let here: HashSet<ObjectId> = elems.iter().map(|e| e.id).collect();
        run_start.retain(|id, _| here.contains(id));
        for id in &here {
            let start = *run_start.entry(*id).or_insert(k);
            if k > start {
                let span = snaps[k].timestamp() - snaps[start].timestamp();
                let long_enough = match threshold {
                    Some(t) => span >= t,
                    None => true,
                };
                if long_enough {
                    return true;
                }
            }
        }
    }
    false
}

/// One row of the analysis report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainerCandidate {
    pub object_id: ObjectId,
    pub class_name: String,
    pub object_name: String,
    pub dominator_name: String,
    pub mean_retained: f64,
    pub stddev_retained: f64,
    pub element_count: usize,
    pub inbound_count: usize,
    pub rejuvenate: bool,
    pub per_criterion: BTreeMap<Criterion, Outcome>,
}

pub const SUPER_ROOT_NAME: &str = "<gc roots>";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidacyReport {
    pub process_name: String,
    /// Timestamp of the last snapshot analyzed.
    pub generated_at: f64,
    pub snapshot_ids: Vec<String>,
    pub rows: Vec<ContainerCandidate>,
    pub transient: Vec<String>,
    pub unreachable: Vec<String>,
}

/// Containers vetted for flushing, as consumed by the rejuvenation action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejuvenationList {
    #[serde(rename = "process")]
    pub process_name: String,
    pub containers: Vec<String>,
    #[serde(skip)]
    pub generated_at: f64,
}

impl RejuvenationList {
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("list serializes");
        s.push('\n');
        s
    }
}

pub fn build_report(
    series: &SnapshotSeries,
    cfg: &CandidacyConfig,
) -> Result<CandidacyReport, CandidacyError> {
    cfg.validate()?;
    if series.len() < cfg.min_snapshots {
        return Err(CandidacyError::SeriesTooShort {
            needed: cfg.min_snapshots,
            got: series.len(),
        });
    }
    let analysis = HeapAnalysis::new(series);
    build_report_from(&analysis, cfg)
}

pub fn build_report_from(
    analysis: &HeapAnalysis<'_>,
    cfg: &CandidacyConfig,
) -> Result<CandidacyReport, CandidacyError> {
    let tracking = track_containers(analysis, cfg)?;
    let series = analysis.series();
    let last = series.len() - 1;
    let last_snap = series.last();

    let mut rows: Vec<ContainerCandidate> = tracking
        .tracked
        .iter()
        .map(|c| {
            let eval = evaluate_criteria(c, analysis, cfg);
            let (mean, stddev) = mean_and_stddev(&c.retained);
            let dominator_name = match analysis.tree(last).dominator_of(c.object_id) {
                Ok(Dominator::Object(d)) => last_snap
                    .get(d)
                    .map(ObjectRecord::display_name)
                    .expect("dominator exists"),
                _ => SUPER_ROOT_NAME.to_string(),
            };
            ContainerCandidate {
                object_id: c.object_id,
                class_name: c.class_name.clone(),
                object_name: c.object_name(),
                dominator_name,
                mean_retained: mean,
                stddev_retained: stddev,
                element_count: c.element_counts[last],
                inbound_count: c.inbound_counts[last],
                rejuvenate: eval.rejuvenate,
                per_criterion: eval.per_criterion,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_retained
            .total_cmp(&a.mean_retained)
            .then(a.object_id.cmp(&b.object_id))
    });

    Ok(CandidacyReport {
        process_name: last_snap.process_name().to_string(),
        generated_at: last_snap.timestamp(),
        snapshot_ids: series.snapshots().iter().map(|s| s.snapshot_id().to_string()).collect(),
        rows,
        transient: tracking.transient,
        unreachable: tracking.unreachable,
    })
}

impl CandidacyReport {
    pub fn rejuvenation_list(&self) -> RejuvenationList {
        RejuvenationList {
            process_name: self.process_name.clone(),
            containers: self
                .rows
                .iter()
                .filter(|r| r.rejuvenate)
                .map(|r| r.object_name.clone())
                .collect(),
            generated_at: self.generated_at,
        }
    }

    pub fn candidates(&self) -> impl Iterator<Item = &ContainerCandidate> {
        self.rows.iter().filter(|r| r.rejuvenate)
    }

    /// Writes the `object_name,dominator_name,mean,standard_deviation,number,rejuvenate` table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CandidacyError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "object_name",
            "dominator_name",
            "mean",
            "standard_deviation",
            "number",
            "rejuvenate",
        ])?;
        for row in &self.rows {
            w.write_record([
                row.object_name.clone(),
                row.dominator_name.clone(),
                format!("{:.3}", row.mean_retained),
                format!("{:.3}", row.stddev_retained),
                row.element_count.to_string(),
                if row.rejuvenate { "TRUE" } else { "FALSE" }.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
