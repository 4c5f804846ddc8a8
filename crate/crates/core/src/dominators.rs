//! Dominator tree and retained sizes of a heap snapshot.
//!
//! Object `d` dominates `y` when every path from any GC root to `y` passes
//! through `d`. All GC roots hang off a synthetic super root, so an object
//! reachable through two independent roots is immediately dominated by the
//! super root. The tree is built with the Lengauer-Tarjan algorithm (simple
//! variant: path compression without balanced linking), which handles graphs
//! with hundreds of thousands of objects comfortably.

use std::collections::HashMap;

use thiserror::Error;

use crate::heap::{HeapSnapshot, ObjectId};

const NONE: u32 = u32::MAX;

/// Immediate dominator of a reachable object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dominator {
    SuperRoot,
    Object(ObjectId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DominatorError {
    #[error("object {0} is not reachable from any gc root")]
    UnreachableObject(ObjectId),
}

#[derive(Debug, Clone)]
pub struct DominatorTree {
    ids: Vec<ObjectId>,
    index: HashMap<ObjectId, u32>,
    /// Per snapshot index; `super_root` for children of the super root and
    /// `NONE` for unreachable objects.
    idom: Vec<u32>,
    /// Reachable objects in DFS preorder from the super root.
    preorder: Vec<u32>,
    super_root: u32,
}

impl DominatorTree {
    pub fn dominator_of(&self, id: ObjectId) -> Result<Dominator, DominatorError> {
        let node = *self
            .index
            .get(&id)
            .ok_or(DominatorError::UnreachableObject(id))?;
        match self.idom[node as usize] {
            NONE => Err(DominatorError::UnreachableObject(id)),
            d if d == self.super_root => Ok(Dominator::SuperRoot),
            d => Ok(Dominator::Object(self.ids[d as usize])),
        }
    }

    pub fn is_reachable(&self, id: ObjectId) -> bool {
        self.index
            .get(&id)
            .is_some_and(|&i| self.idom[i as usize] != NONE)
    }

    pub fn reachable_count(&self) -> usize {
        self.preorder.len()
    }

    /// `(object, immediate dominator)` for every reachable object, in
    /// snapshot order.
    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, Dominator)> + '_ {
        self.idom.iter().enumerate().filter_map(move |(i, &d)| match d {
            NONE => None,
            d if d == self.super_root => Some((self.ids[i], Dominator::SuperRoot)),
            d => Some((self.ids[i], Dominator::Object(self.ids[d as usize]))),
        })
    }
}

/// Compressed adjacency lists.
struct Csr {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl Csr {
    fn neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    fn from_edges(nodes: usize, edges: &[(u32, u32)]) -> Csr {
        let mut offsets = vec![0u32; nodes + 1];
        for &(from, _) in edges {
            offsets[from as usize + 1] += 1;
        }
        for i in 0..nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; edges.len()];
        for &(from, to) in edges {
            targets[fill[from as usize] as usize] = to;
            fill[from as usize] += 1;
        }
        Csr { offsets, targets }
    }
}

pub fn compute_dominators(snapshot: &HeapSnapshot) -> DominatorTree {
    let n = snapshot.len();
    assert!(n < NONE as usize - 1, "snapshot too large");
    let super_root = n as u32;
    let total = n + 1;

    let mut edges = Vec::new();
    for root in snapshot.gc_roots() {
        edges.push((super_root, snapshot.index_of(*root).expect("validated") as u32));
    }
    for (i, obj) in snapshot.objects().iter().enumerate() {
        for r in &obj.refs {
            edges.push((i as u32, snapshot.index_of(*r).expect("validated") as u32));
        }
    }
    let succ = Csr::from_edges(total, &edges);
    let reversed: Vec<(u32, u32)> = edges.iter().map(|&(a, b)| (b, a)).collect();
    let pred = Csr::from_edges(total, &reversed);

    // Iterative DFS numbering from the super root.
    let mut dfnum = vec![NONE; total];
    let mut vertex: Vec<u32> = Vec::with_capacity(total);
    let mut parent = vec![NONE; total];
    let mut stack: Vec<(u32, usize)> = vec![(super_root, 0)];
    dfnum[super_root as usize] = 0;
    vertex.push(super_root);
    while let Some(top) = stack.last_mut() {
        let (v, next) = *top;
        let children = succ.neighbors(v);
        if next < children.len() {
            top.1 += 1;
            let w = children[next];
            if dfnum[w as usize] == NONE {
                dfnum[w as usize] = vertex.len() as u32;
                vertex.push(w);
                parent[w as usize] = v;
                stack.push((w, 0));
            }
        } else {
            stack.pop();
        }
    }

    let count = vertex.len();
    // Semidominators are kept as DFS numbers.
    let mut semi = dfnum.clone();
    let mut idom = vec![NONE; total];
    let mut ancestor = vec![NONE; total];
    let mut label: Vec<u32> = (0..total as u32).collect();
    let mut bucket: Vec<Vec<u32>> = vec![Vec::new(); total];
    let mut path = Vec::new();

    for i in (1..count).rev() {
        let w = vertex[i];
        for &v in pred.neighbors(w) {
            if dfnum[v as usize] == NONE {
                continue;
            }
            let u = eval(v, &mut ancestor, &mut label, &semi, &mut path);
            if semi[u as usize] < semi[w as usize] {
                semi[w as usize] = semi[u as usize];
            }
        }
        bucket[vertex[semi[w as usize] as usize] as usize].push(w);
        let p = parent[w as usize];
        ancestor[w as usize] = p;
        for v in std::mem::take(&mut bucket[p as usize]) {
            let u = eval(v, &mut ancestor, &mut label, &semi, &mut path);
            idom[v as usize] = if semi[u as usize] < semi[v as usize] { u } else { p };
        }
    }
    for &w in &vertex[1..] {
        if idom[w as usize] != vertex[semi[w as usize] as usize] {
            idom[w as usize] = idom[idom[w as usize] as usize];
        }
    }

    idom.truncate(n);
    let preorder = vertex[1..].to_vec();
    let ids: Vec<ObjectId> = snapshot.objects().iter().map(|o| o.id).collect();
    let index = ids.iter().enumerate().map(|(i, id)| (*id, i as u32)).collect();
    DominatorTree {
        ids,
        index,
        idom,
        preorder,
        super_root,
    }
}

fn eval(v: u32, ancestor: &mut [u32], label: &mut [u32], semi: &[u32], path: &mut Vec<u32>) -> u32 {
    if ancestor[v as usize] == NONE {
        return v;
    }
    compress(v, ancestor, label, semi, path);
    label[v as usize]
}

fn compress(v: u32, ancestor: &mut [u32], label: &mut [u32], semi: &[u32], path: &mut Vec<u32>) {
    path.clear();
    let mut y = v;
    while ancestor[ancestor[y as usize] as usize] != NONE {
        path.push(y);
        y = ancestor[y as usize];
    }
    while let Some(y) = path.pop() {
        let a = ancestor[y as usize] as usize;
        if semi[label[a] as usize] < semi[label[y as usize] as usize] {
            label[y as usize] = label[a];
        }
        ancestor[y as usize] = ancestor[a];
    }
}

/// Retained size of every reachable object: its shallow size plus the
/// shallow sizes of everything in its dominator subtree.
#[derive(Debug, Clone)]
pub struct RetainedSizes {
    index: HashMap<ObjectId, u32>,
    retained: Vec<Option<u64>>,
}

impl RetainedSizes {
    /// `None` for unreachable or unknown objects.
    pub fn get(&self, id: ObjectId) -> Option<u64> {
        self.index.get(&id).and_then(|&i| self.retained[i as usize])
    }
}

pub fn compute_retained(snapshot: &HeapSnapshot, tree: &DominatorTree) -> RetainedSizes {
    let n = snapshot.len();
    debug_assert_eq!(tree.ids.len(), n, "tree was computed for another snapshot");
    let mut retained: Vec<Option<u64>> = vec![None; n];
    for &v in &tree.preorder {
        retained[v as usize] = Some(snapshot.objects()[v as usize].shallow_size);
    }
    // A dominator precedes everything it dominates in DFS preorder.
    for &v in tree.preorder.iter().rev() {
        let d = tree.idom[v as usize];
        if d != tree.super_root {
            let own = retained[v as usize].expect("reachable");
            let slot = retained[d as usize].as_mut().expect("dominator is reachable");
            *slot += own;
        }
    }
    RetainedSizes {
        index: tree.index.clone(),
        retained,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::ObjectRecord;

    fn snapshot(objects: Vec<ObjectRecord>, roots: &[u64]) -> HeapSnapshot {
        HeapSnapshot::new("s", 0.0, "p", roots.iter().map(|&r| ObjectId(r)).collect(), objects)
            .unwrap()
    }

    #[test]
    fn chain() {
        let snap = snapshot(
            vec![
                ObjectRecord::new(1, "A", 10).with_refs([2]),
                ObjectRecord::new(2, "B", 20).with_refs([3]),
                ObjectRecord::new(3, "C", 30),
            ],
            &[1],
        );
        let tree = compute_dominators(&snap);
        assert_eq!(tree.dominator_of(ObjectId(1)), Ok(Dominator::SuperRoot));
        assert_eq!(tree.dominator_of(ObjectId(2)), Ok(Dominator::Object(ObjectId(1))));
        assert_eq!(tree.dominator_of(ObjectId(3)), Ok(Dominator::Object(ObjectId(2))));
        let retained = compute_retained(&snap, &tree);
        assert_eq!(retained.get(ObjectId(1)), Some(60));
        assert_eq!(retained.get(ObjectId(2)), Some(50));
        assert_eq!(retained.get(ObjectId(3)), Some(30));
    }

    #[test]
    fn diamond_from_two_roots() {
        let snap = snapshot(
            vec![
                ObjectRecord::new(1, "A", 1).with_refs([3]),
                ObjectRecord::new(2, "B", 1).with_refs([3]),
                ObjectRecord::new(3, "C", 8),
            ],
            &[1, 2],
        );
        let tree = compute_dominators(&snap);
        assert_eq!(tree.dominator_of(ObjectId(3)), Ok(Dominator::SuperRoot));
        let retained = compute_retained(&snap, &tree);
        assert_eq!(retained.get(ObjectId(1)), Some(1));
        assert_eq!(retained.get(ObjectId(2)), Some(1));
        assert_eq!(retained.get(ObjectId(3)), Some(8));
    }

    #[test]
    fn unreachable_object_has_no_dominator() {
        let snap = snapshot(
            vec![ObjectRecord::new(1, "A", 1), ObjectRecord::new(2, "Garbage", 5)],
            &[1],
        );
        let tree = compute_dominators(&snap);
        assert_eq!(
            tree.dominator_of(ObjectId(2)),
            Err(DominatorError::UnreachableObject(ObjectId(2)))
        );
        assert_eq!(
            tree.dominator_of(ObjectId(42)),
            Err(DominatorError::UnreachableObject(ObjectId(42)))
        );
        assert_eq!(compute_retained(&snap, &tree).get(ObjectId(2)), None);
        assert_eq!(tree.reachable_count(), 1);
    }

    #[test]
    fn root_referenced_by_another_object_stays_under_super_root() {
        let snap = snapshot(
            vec![
                ObjectRecord::new(1, "A", 1).with_refs([2]),
                ObjectRecord::new(2, "B", 1).with_refs([1]),
            ],
            &[1, 2],
        );
        let tree = compute_dominators(&snap);
        assert_eq!(tree.dominator_of(ObjectId(1)), Ok(Dominator::SuperRoot));
        assert_eq!(tree.dominator_of(ObjectId(2)), Ok(Dominator::SuperRoot));
    }

    #[test]
    fn cycle_below_single_owner() {
        let snap = snapshot(
            vec![
                ObjectRecord::new(1, "Owner", 4).with_refs([2]),
                ObjectRecord::new(2, "X", 4).with_refs([3]),
                ObjectRecord::new(3, "Y", 4).with_refs([2, 4]),
                ObjectRecord::new(4, "Z", 4),
            ],
            &[1],
        );
        let tree = compute_dominators(&snap);
        assert_eq!(tree.dominator_of(ObjectId(3)), Ok(Dominator::Object(ObjectId(2))));
        assert_eq!(tree.dominator_of(ObjectId(4)), Ok(Dominator::Object(ObjectId(3))));
        assert_eq!(compute_retained(&snap, &tree).get(ObjectId(1)), Some(16));
    }

    #[test]
    fn empty_snapshot() {
        let snap = snapshot(vec![], &[]);
        let tree = compute_dominators(&snap);
        assert_eq!(tree.reachable_count(), 0);
        assert_eq!(tree.iter().count(), 0);
    }
}
