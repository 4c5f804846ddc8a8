//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use agewatch::dominators::{compute_dominators, compute_retained, Dominator};
use agewatch::heap::{HeapSnapshot, ObjectId, ObjectRecord};
use rand::Rng;

fn reachable(snap: &HeapSnapshot, removed: Option<ObjectId>) -> HashSet<ObjectId> {
    let mut seen = HashSet::new();
    let mut queue: VecDeque<ObjectId> = snap
        .gc_roots()
        .iter()
        .copied()
        .filter(|r| Some(*r) != removed)
        .collect();
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) {
            continue;
        }
        for r in &snap.get(id).unwrap().refs {
            if Some(*r) != removed && !seen.contains(r) {
                queue.push_back(*r);
            }
        }
    }
    seen
}

/// `u` dominates `v` iff deleting `u` disconnects `v` from every GC root.
pub struct DominatorOracle {
    pub reachable: HashSet<ObjectId>,
    /// Strict dominators of each reachable object (objects only).
    dominators: HashMap<ObjectId, HashSet<ObjectId>>,
}

impl DominatorOracle {
    pub fn new(snap: &HeapSnapshot) -> Self {
        let all = reachable(snap, None);
        let mut dominators: HashMap<ObjectId, HashSet<ObjectId>> =
            all.iter().map(|v| (*v, HashSet::new())).collect();
        for u in &all {
            let without = reachable(snap, Some(*u));
            for v in &all {
                if v != u && !without.contains(v) {
                    dominators.get_mut(v).unwrap().insert(*u);
                }
            }
        }
        DominatorOracle {
            reachable: all,
            dominators,
        }
    }

    pub fn idom(&self, v: ObjectId) -> Dominator {
        let doms = &self.dominators[&v];
        // The closest strict dominator is the one dominated by all the others.
        doms.iter()
            .find(|d| doms.iter().all(|o| *o == **d || self.dominators[d].contains(o)))
            .map_or(Dominator::SuperRoot, |d| Dominator::Object(*d))
    }

    pub fn retained(&self, snap: &HeapSnapshot, v: ObjectId) -> u64 {
        snap.objects()
            .iter()
            .filter(|o| o.id == v || self.dominators.get(&o.id).is_some_and(|d| d.contains(&v)))
            .map(|o| o.shallow_size)
            .sum()
    }
}

/// Compares the fast dominator tree and retained sizes with the oracle.
pub fn check_dominators(snap: &HeapSnapshot) -> Result<(), String> {
    let tree = compute_dominators(snap);
    let retained = compute_retained(snap, &tree);
    let oracle = DominatorOracle::new(snap);
    for obj in snap.objects() {
        let id = obj.id;
        if oracle.reachable.contains(&id) {
            let got = tree.dominator_of(id).map_err(|e| e.to_string())?;
            if got != oracle.idom(id) {
                return Err(format!("idom of {id}: {got:?} vs {:?}", oracle.idom(id)));
            }
            if retained.get(id) != Some(oracle.retained(snap, id)) {
                return Err(format!("retained of {id}: {:?} vs {}", retained.get(id), oracle.retained(snap, id)));
            }
        } else if tree.dominator_of(id).is_ok() || retained.get(id).is_some() {
            return Err(format!("{id} should be unreachable"));
        }
    }
    if tree.reachable_count() != oracle.reachable.len() {
        return Err("reachable count differs".into());
    }
    Ok(())
}

/// Builds a snapshot over nodes `1..=n` from edge and root index lists.
pub fn graph_snapshot(n: usize, edges: &[(usize, usize)], roots: &[usize], sizes: &[u64]) -> HeapSnapshot {
    let mut objects: Vec<ObjectRecord> = (0..n)
        .map(|i| ObjectRecord::new(i as u64 + 1, "Node", sizes[i]))
        .collect();
    for &(a, b) in edges {
        objects[a].refs.push(ObjectId(b as u64 + 1));
    }
    let roots = roots.iter().map(|r| ObjectId(*r as u64 + 1)).collect();
    HeapSnapshot::new("g", 0.0, "p", roots, objects).unwrap()
}

/// Random rooted graph with at most `max_nodes` nodes.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> HeapSnapshot {
    let n = rng.gen_range(1..=max_nodes);
    let edges: Vec<(usize, usize)> = (0..rng.gen_range(0..=3 * n))
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect();
    let roots: Vec<usize> = (0..rng.gen_range(1..=3.min(n))).map(|_| rng.gen_range(0..n)).collect();
    let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1000)).collect();
    graph_snapshot(n, &edges, &roots, &sizes)
}

/// Mann-Kendall S by counting every ordered pair.
pub fn brute_force_s(values: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s += match values[j].partial_cmp(&values[i]).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    s
}

/// Median of all pairwise slopes with distinct times.
pub fn brute_force_sen(samples: &[(f64, f64)]) -> f64 {
    let mut slopes = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let dt = samples[j].0 - samples[i].0;
            if dt != 0.0 {
                slopes.push((samples[j].1 - samples[i].1) / dt);
            }
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = slopes.len();
    if m % 2 == 1 {
        slopes[m / 2]
    } else {
        (slopes[m / 2 - 1] + slopes[m / 2]) / 2.0
    }
}
