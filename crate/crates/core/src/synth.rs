//! Synthetic snapshot series with a known candidacy outcome.
//!
//! Every container is built to fail a criterion, except the
//! designated eligible ones which pass them all under the default
//! configuration. Some eligible containers hold a critical class so that
//! enabling the black-list removes them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::heap::{HeapSnapshot, ObjectId, ObjectRecord, SnapshotSeries};

pub const CRITICAL_CLASS: &str = "com.android.server.am.ProcessRecord";

const CONTAINER_CLASSES: [&str; 5] = [
    "java.util.ArrayList",
    "java.util.HashMap",
    "java.util.LinkedList",
    "java.util.Hashtable",
    "java.util.Vector",
];
const ELEMENT_CLASSES: [&str; 3] = ["java.lang.String", "android.util.Log$Entry", "android.os.Bundle"];
const SERVICES: u64 = 12;
const HOLDER_BASE: u64 = 1_000_000;
const CONTAINER_BASE: u64 = 2_000_000;
const ELEMENT_BASE: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Passes every criterion.
    Eligible,
    /// Reachable straight from a GC root or from two owners (C1).
    SharedRoot,
    /// Constant contents (C2).
    Fixed,
    /// Shrinks over the series (C2).
    Shrinking,
    /// Grows, but every element is replaced between snapshots (C3).
    Churning,
    /// Grows, but its elements are touched at every snapshot (C4).
    HotAccess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub total_containers: usize,
    pub eligible: usize,
    /// Every `critical_every`-th eligible container holds [`CRITICAL_CLASS`].
    pub critical_every: usize,
    pub snapshots: usize,
    pub interval_s: f64,
    pub process: String,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            total_containers: 12_674,
            eligible: 36,
            critical_every: 6,
            snapshots: 3,
            interval_s: 600.0,
            process: "system_server".into(),
            seed: 7,
        }
    }
}

/// Assignment of categories to container indices.
pub fn categories(spec: &SynthSpec) -> Vec<Category> {
    assert!(spec.eligible <= spec.total_containers);
    let rest = spec.total_containers - spec.eligible;
    let weighted = [
        (Category::SharedRoot, 10),
        (Category::Shrinking, 5),
        (Category::Churning, 8),
        (Category::HotAccess, 7),
    ];
    let mut cats = vec![Category::Eligible; spec.eligible];
    let mut used = 0;
    for (cat, pct) in weighted {
        let n = rest * pct / 100;
        cats.extend(std::iter::repeat(cat).take(n));
        used += n;
    }
    cats.extend(std::iter::repeat(Category::Fixed).take(rest - used));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    cats.shuffle(&mut rng);
    cats
}

/// Display names (`class@id`) of the eligible containers, in id order.
/// With `drop_critical` the ones holding [`CRITICAL_CLASS`] are left out.
pub fn expected_candidates(spec: &SynthSpec, drop_critical: bool) -> Vec<String> {
    let mut rank = 0;
    let mut names = Vec::new();
    for (c, cat) in categories(spec).into_iter().enumerate() {
        if cat != Category::Eligible {
            continue;
        }
        let critical = rank % spec.critical_every == 0;
        rank += 1;
        if drop_critical && critical {
            continue;
        }
        let id = CONTAINER_BASE + c as u64;
        names.push(format!("{}@{id}", CONTAINER_CLASSES[c % CONTAINER_CLASSES.len()]));
    }
    names
}

pub fn generate(spec: &SynthSpec) -> SnapshotSeries {
    let cats = categories(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    // Per-container constants drawn once so every snapshot agrees.
    let fixed_len: Vec<u64> = cats.iter().map(|_| rng.gen_range(0..4)).collect();
    let elem_size: Vec<u64> = cats.iter().map(|_| rng.gen_range(16..96)).collect();
    let mut critical = vec![false; cats.len()];
    let mut rank = 0;
    for (c, cat) in cats.iter().enumerate() {
        if *cat == Category::Eligible {
            critical[c] = rank % spec.critical_every == 0;
            rank += 1;
        }
    }

    let snapshots = (0..spec.snapshots)
        .map(|k| {
            let ts = k as f64 * spec.interval_s;
            let mut objects = Vec::new();
            let mut service_refs: Vec<Vec<u64>> = vec![Vec::new(); SERVICES as usize];
            let mut roots: Vec<ObjectId> = (1..=SERVICES).map(ObjectId).collect();

            for (c, cat) in cats.iter().enumerate() {
                let holder = HOLDER_BASE + c as u64;
                let container = CONTAINER_BASE + c as u64;
                let service = c % SERVICES as usize;
                service_refs[service].push(holder);

                let k64 = k as u64;
                let (ids, created_at_snapshot): (Vec<u64>, Box<dyn Fn(u64) -> u64>) = match cat {
                    Category::Fixed => ((0..fixed_len[c]).collect(), Box::new(|_| 0)),
                    Category::Shrinking => {
                        let n = 2 * (spec.snapshots as u64 - k64);
                        ((0..n).collect(), Box::new(|_| 0))
                    }
                    Category::Churning => {
                        ((0..=k64).map(|j| 100 * k64 + j).collect(), Box::new(move |_| k64))
                    }
                    Category::Eligible | Category::HotAccess | Category::SharedRoot => {
                        ((0..2 * (k64 + 1)).collect(), Box::new(|j| j / 2))
                    }
                };

                match cat {
                    Category::SharedRoot if c % 2 == 0 => roots.push(ObjectId(container)),
                    Category::SharedRoot => service_refs[(service + 1) % SERVICES as usize].push(container),
                    _ => {}
                }

                let elem_ids: Vec<u64> = ids.iter().map(|j| ELEMENT_BASE + c as u64 * 1000 + j).collect();
                objects.push(ObjectRecord::new(holder, "com.android.server.Holder", 16).with_refs([container]));
                objects.push(
                    ObjectRecord::new(container, CONTAINER_CLASSES[c % CONTAINER_CLASSES.len()], 40)
                        .with_refs(elem_ids.iter().copied()),
                );
                for (&j, &eid) in ids.iter().zip(&elem_ids) {
                    let class = if critical[c] && j == 0 {
                        CRITICAL_CLASS
                    } else {
                        ELEMENT_CLASSES[(j % 3) as usize]
                    };
                    let mut e = ObjectRecord::new(eid, class, elem_size[c]);
                    let created = created_at_snapshot(j) as f64 * spec.interval_s;
                    e.created_at = Some(created);
                    e.last_access = Some(if *cat == Category::HotAccess { ts } else { created });
                    objects.push(e);
                }
            }

            for (s, refs) in service_refs.into_iter().enumerate() {
                objects.push(
                    ObjectRecord::new(s as u64 + 1, format!("com.android.server.Service{}", s + 1), 64)
                        .with_refs(refs),
                );
            }
            HeapSnapshot::new(format!("synth-{k}"), ts, spec.process.clone(), roots, objects)
                .expect("generated snapshot is well-formed")
        })
        .collect();
    SnapshotSeries::new(snapshots).expect("generated series is well-formed")
}
