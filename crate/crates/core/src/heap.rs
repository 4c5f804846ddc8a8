//! Heap snapshot model, the JSON snapshot format, and container discovery.
//!
//! A [`HeapSnapshot`] is the object reference graph of one process at one
//! instant: every object with its class, shallow size and outgoing
//! references, plus the GC roots reachability is computed from. Snapshots are
//! validated on construction, so any snapshot value in hand is fully
//! resolved (no dangling references, no duplicate ids).
//!
//! The on-disk format is one UTF-8 JSON document per file:
//!
//! ```json
//! {"snapshot_id": "s0", "timestamp_s": 0, "process": "system_server",
//!  "gc_roots": [1],
//!  "objects": [{"id": 1, "class": "Root", "shallow_size": 16, "refs": [2]},
//!              {"id": 2, "class": "java.util.ArrayList", "shallow_size": 24, "refs": []}]}
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an object within a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum HeapError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("object {from} references missing object {to}")]
    DanglingReference { from: ObjectId, to: ObjectId },
    #[error("gc root {0} does not resolve to an object")]
    DanglingRoot(ObjectId),
    #[error("duplicate object id {0}")]
    DuplicateId(ObjectId),
    #[error("invalid timestamp {0}")]
    InvalidTimestamp(f64),
    #[error("a snapshot series needs at least one snapshot")]
    EmptySeries,
    #[error("snapshot timestamps must strictly increase: {previous} followed by {next} in {snapshot_id}")]
    NonMonotonicTimestamps {
        previous: f64,
        next: f64,
        snapshot_id: String,
    },
    #[error("duplicate snapshot id {0}")]
    DuplicateSnapshotId(String),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<HeapError>,
    },
}

impl HeapError {
    /// The underlying error, with any file context stripped.
    pub fn root_cause(&self) -> &HeapError {
        match self {
            HeapError::InFile { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    #[serde(rename = "class")]
    pub class_name: String,
    pub shallow_size: u64,
    #[serde(default)]
    pub refs: Vec<ObjectId>,
    #[serde(rename = "created_at_s", default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<f64>,
    #[serde(rename = "last_access_s", default, skip_serializing_if = "Option::is_none")]
    pub last_access: Option<f64>,
}

impl ObjectRecord {
    pub fn new(id: u64, class_name: impl Into<String>, shallow_size: u64) -> Self {
        ObjectRecord {
            id: ObjectId(id),
            class_name: class_name.into(),
            shallow_size,
            refs: Vec::new(),
            created_at: None,
            last_access: None,
        }
    }

    pub fn with_refs(mut self, refs: impl IntoIterator<Item = u64>) -> Self {
        self.refs = refs.into_iter().map(ObjectId).collect();
        self
    }

    /// Display name in the `class@id` form used by reports.
    pub fn display_name(&self) -> String {
        display_name(&self.class_name, self.id)
    }
}

pub fn display_name(class_name: &str, id: ObjectId) -> String {
    format!("{class_name}@{id}")
}

#[derive(Deserialize)]
struct SnapshotDoc {
    snapshot_id: String,
    timestamp_s: f64,
    process: String,
    #[serde(default)]
    gc_roots: Vec<ObjectId>,
    #[serde(default)]
    objects: Vec<ObjectRecord>,
}

#[derive(Serialize)]
struct SnapshotHeader<'a> {
    snapshot_id: &'a str,
    timestamp_s: f64,
    process: &'a str,
    gc_roots: &'a [ObjectId],
}

/// Immutable, validated object reference graph of one process.
#[derive(Debug, Clone)]
pub struct HeapSnapshot {
    snapshot_id: String,
    timestamp: f64,
    process_name: String,
    gc_roots: Vec<ObjectId>,
    objects: Vec<ObjectRecord>,
    index: HashMap<ObjectId, usize>,
}

impl PartialEq for HeapSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot_id == other.snapshot_id
            && self.timestamp == other.timestamp
            && self.process_name == other.process_name
            && self.gc_roots == other.gc_roots
            && self.objects == other.objects
    }
}

impl HeapSnapshot {
    pub fn new(
        snapshot_id: impl Into<String>,
        timestamp: f64,
        process_name: impl Into<String>,
        gc_roots: Vec<ObjectId>,
        objects: Vec<ObjectRecord>,
    ) -> Result<Self, HeapError> {
        if !timestamp.is_finite() {
            return Err(HeapError::InvalidTimestamp(timestamp));
        }
        let mut index = HashMap::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            if index.insert(obj.id, i).is_some() {
                return Err(HeapError::DuplicateId(obj.id));
            }
        }
        for obj in &objects {
            if let Some(missing) = obj.refs.iter().find(|r| !index.contains_key(r)) {
                return Err(HeapError::DanglingReference {
                    from: obj.id,
                    to: *missing,
                });
            }
        }
        if let Some(missing) = gc_roots.iter().find(|r| !index.contains_key(r)) {
            return Err(HeapError::DanglingRoot(*missing));
        }
        Ok(HeapSnapshot {
            snapshot_id: snapshot_id.into(),
            timestamp,
            process_name: process_name.into(),
            gc_roots,
            objects,
            index,
        })
    }

    /// Parses a snapshot document. `origin` names the source in diagnostics.
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, HeapError> {
        let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| HeapError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        HeapSnapshot::new(
            doc.snapshot_id,
            doc.timestamp_s,
            doc.process,
            doc.gc_roots,
            doc.objects,
        )
    }

    /// Serializes to the snapshot format, one object per line.
    pub fn to_json_string(&self) -> String {
        let header = SnapshotHeader {
            snapshot_id: &self.snapshot_id,
            timestamp_s: self.timestamp,
            process: &self.process_name,
            gc_roots: &self.gc_roots,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.pop();
        out.push_str(",\"objects\":[");
        for (i, obj) in self.objects.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            out.push_str(&serde_json::to_string(obj).expect("object serializes"));
        }
        out.push_str("\n]}\n");
        out
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn process_name(&self) -> &str {
        &self.process_name
    }

    pub fn gc_roots(&self) -> &[ObjectId] {
        &self.gc_roots
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: ObjectId) -> Option<&ObjectRecord> {
        self.index_of(id).map(|i| &self.objects[i])
    }

    /// Number of distinct objects holding a reference to each object.
    pub fn inbound_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.objects.len()];
        let mut seen = HashSet::new();
        for obj in &self.objects {
            seen.clear();
            for r in &obj.refs {
                if seen.insert(*r) {
                    counts[self.index[r]] += 1;
                }
            }
        }
        counts
    }
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<HeapSnapshot, HeapError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| HeapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    HeapSnapshot::from_json_str(&text, &path.display().to_string())
}

pub fn write_snapshot(snapshot: &HeapSnapshot, path: impl AsRef<Path>) -> Result<(), HeapError> {
    let path = path.as_ref();
    fs::write(path, snapshot.to_json_string()).map_err(|source| HeapError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Snapshots of one process in strictly increasing time order.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    snapshots: Vec<HeapSnapshot>,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<HeapSnapshot>) -> Result<Self, HeapError> {
        if snapshots.is_empty() {
            return Err(HeapError::EmptySeries);
        }
        let mut ids = HashSet::new();
        for (i, snap) in snapshots.iter().enumerate() {
            if !ids.insert(snap.snapshot_id.as_str()) {
                return Err(HeapError::DuplicateSnapshotId(snap.snapshot_id.clone()));
            }
            if i > 0 && snap.timestamp <= snapshots[i - 1].timestamp {
                return Err(HeapError::NonMonotonicTimestamps {
                    previous: snapshots[i - 1].timestamp,
                    next: snap.timestamp,
                    snapshot_id: snap.snapshot_id.clone(),
                });
            }
        }
        Ok(SnapshotSeries { snapshots })
    }

    pub fn snapshots(&self) -> &[HeapSnapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn first(&self) -> &HeapSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &HeapSnapshot {
        &self.snapshots[self.snapshots.len() - 1]
    }
}

/// Loads snapshots in the given order. Errors carry the offending path.
pub fn load_series<P: AsRef<Path>>(paths: &[P]) -> Result<SnapshotSeries, HeapError> {
    let mut snapshots = Vec::with_capacity(paths.len());
    for path in paths {
        let snap = load_snapshot(path).map_err(|e| match e {
            e @ (HeapError::Io { .. } | HeapError::Parse { .. }) => e,
            other => HeapError::InFile {
                path: path.as_ref().to_path_buf(),
                source: Box::new(other),
            },
        })?;
        snapshots.push(snap);
    }
    SnapshotSeries::new(snapshots)
}

/// Class names treated as containers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ContainerClassSet {
    class_names: BTreeSet<String>,
}

impl ContainerClassSet {
    /// The collection classes queried by default: linked list, hash table,
    /// array list, hash map and vector.
    pub const DEFAULT_CLASSES: [&'static str; 5] = [
        "java.util.LinkedList",
        "java.util.Hashtable",
        "java.util.ArrayList",
        "java.util.HashMap",
        "java.util.Vector",
    ];

    pub fn new<I, S>(names: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let class_names: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if class_names.is_empty() {
            return Err("container class set must not be empty".to_string());
        }
        Ok(ContainerClassSet { class_names })
    }

    pub fn contains(&self, class_name: &str) -> bool {
        self.class_names.contains(class_name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.class_names.iter().map(String::as_str)
    }
}

impl Default for ContainerClassSet {
    fn default() -> Self {
        ContainerClassSet::new(Self::DEFAULT_CLASSES).expect("non-empty")
    }
}

impl TryFrom<Vec<String>> for ContainerClassSet {
    type Error = String;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        ContainerClassSet::new(names)
    }
}

impl From<ContainerClassSet> for Vec<String> {
    fn from(set: ContainerClassSet) -> Self {
        set.class_names.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContainerView {
    pub object_id: ObjectId,
    pub class_name: String,
    /// Out-degree of the container node.
    pub element_count: usize,
    pub inbound_count: usize,
}

/// Every object whose class is in `classes`, in snapshot order.
pub fn find_containers(snapshot: &HeapSnapshot, classes: &ContainerClassSet) -> Vec<ContainerView> {
    let inbound = snapshot.inbound_counts();
    snapshot
        .objects()
        .iter()
        .enumerate()
        .filter(|(_, obj)| classes.contains(&obj.class_name))
        .map(|(i, obj)| ContainerView {
            object_id: obj.id,
            class_name: obj.class_name.clone(),
            element_count: obj.refs.len(),
            inbound_count: inbound[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(objects: &str, roots: &str) -> String {
        format!(
            r#"{{"snapshot_id":"s","timestamp_s":0,"process":"p","gc_roots":[{roots}],"objects":[{objects}]}}"#
        )
    }

    #[test]
    fn empty_snapshot_is_valid() {
        let snap = HeapSnapshot::from_json_str(&doc("", ""), "t").unwrap();
        assert!(snap.is_empty());
        assert!(snap.gc_roots().is_empty());
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let text = doc(r#"{"id":5,"class":"A","shallow_size":1,"refs":[99]}"#, "5");
        match HeapSnapshot::from_json_str(&text, "t") {
            Err(HeapError::DanglingReference { from, to }) => {
                assert_eq!(from, ObjectId(5));
                assert_eq!(to, ObjectId(99));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let text = doc(
            r#"{"id":7,"class":"A","shallow_size":1},{"id":7,"class":"B","shallow_size":2}"#,
            "",
        );
        assert!(matches!(
            HeapSnapshot::from_json_str(&text, "t"),
            Err(HeapError::DuplicateId(ObjectId(7)))
        ));
    }

    #[test]
    fn dangling_root_is_rejected() {
        let text = doc(r#"{"id":1,"class":"A","shallow_size":1}"#, "2");
        assert!(matches!(
            HeapSnapshot::from_json_str(&text, "t"),
            Err(HeapError::DanglingRoot(ObjectId(2)))
        ));
    }

    #[test]
    fn parse_error_reports_position() {
        let err = HeapSnapshot::from_json_str("{\n  \"snapshot_id\": 3", "f.json").unwrap_err();
        match err {
            HeapError::Parse { origin, line, .. } => {
                assert_eq!(origin, "f.json");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_size_is_a_parse_error() {
        let text = doc(r#"{"id":1,"class":"A","shallow_size":-4}"#, "");
        assert!(matches!(
            HeapSnapshot::from_json_str(&text, "t"),
            Err(HeapError::Parse { .. })
        ));
    }

    #[test]
    fn unknown_keys_and_optional_fields() {
        let text = r#"{"snapshot_id":"s","timestamp_s":1.5,"process":"p","extra":{"x":1},
            "gc_roots":[1],"objects":[{"id":1,"class":"A","shallow_size":3,"refs":[],
            "created_at_s":0.5,"note":"ignored"}]}"#;
        let snap = HeapSnapshot::from_json_str(text, "t").unwrap();
        let obj = snap.get(ObjectId(1)).unwrap();
        assert_eq!(obj.created_at, Some(0.5));
        assert_eq!(obj.last_access, None);
    }

    fn snap_at(id: &str, t: f64) -> HeapSnapshot {
        HeapSnapshot::new(id, t, "p", vec![], vec![]).unwrap()
    }

    #[test]
    fn series_requires_increasing_timestamps() {
        let ok = SnapshotSeries::new(vec![snap_at("a", 0.0), snap_at("b", 60.0), snap_at("c", 120.0)]);
        assert_eq!(ok.unwrap().len(), 3);
        let bad = SnapshotSeries::new(vec![snap_at("a", 0.0), snap_at("b", 60.0), snap_at("c", 60.0)]);
        assert!(matches!(bad, Err(HeapError::NonMonotonicTimestamps { .. })));
        assert_eq!(SnapshotSeries::new(vec![snap_at("a", 0.0)]).unwrap().len(), 1);
        assert!(matches!(SnapshotSeries::new(vec![]), Err(HeapError::EmptySeries)));
        assert!(matches!(
            SnapshotSeries::new(vec![snap_at("a", 0.0), snap_at("a", 1.0)]),
            Err(HeapError::DuplicateSnapshotId(_))
        ));
    }

    #[test]
    fn finds_array_list_with_owner() {
        let objects = vec![
            ObjectRecord::new(1, "Owner", 16).with_refs([2]),
            ObjectRecord::new(2, "java.util.ArrayList", 24).with_refs([3, 4, 5]),
            ObjectRecord::new(3, "E", 8),
            ObjectRecord::new(4, "E", 8),
            ObjectRecord::new(5, "E", 8),
        ];
        let snap = HeapSnapshot::new("s", 0.0, "p", vec![ObjectId(1)], objects).unwrap();
        let views = find_containers(&snap, &ContainerClassSet::default());
        assert_eq!(
            views,
            vec![ContainerView {
                object_id: ObjectId(2),
                class_name: "java.util.ArrayList".into(),
                element_count: 3,
                inbound_count: 1,
            }]
        );
    }

    #[test]
    fn no_containers_yields_empty_list() {
        let objects = vec![ObjectRecord::new(1, "Owner", 16)];
        let snap = HeapSnapshot::new("s", 0.0, "p", vec![ObjectId(1)], objects).unwrap();
        assert!(find_containers(&snap, &ContainerClassSet::default()).is_empty());
    }

    #[test]
    fn inbound_counts_distinct_referrers() {
        let objects = vec![
            ObjectRecord::new(1, "A", 1).with_refs([3, 3]),
            ObjectRecord::new(2, "A", 1).with_refs([3]),
            ObjectRecord::new(3, "A", 1),
        ];
        let snap = HeapSnapshot::new("s", 0.0, "p", vec![], objects).unwrap();
        assert_eq!(snap.inbound_counts(), vec![0, 0, 2]);
    }

    #[test]
    fn empty_class_set_is_rejected() {
        assert!(ContainerClassSet::new(Vec::<String>::new()).is_err());
    }
}
