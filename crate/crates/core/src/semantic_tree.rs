//! The is-a hierarchy that supervises training.
//!
//! Trees arrive as a JSON object mapping each parent to the list of its
//! direct children, rooted at `"entity"`:
//!
//! ```json
//! {"entity": ["animal"], "animal": ["cat", "dog"],
//!  "cat": ["ragdoll", "british shorthair"],
//!  "dog": ["golden retriever", "alaskan malamute"]}
//! ```
//!
//! Names are NFC-normalized and trimmed, then matched case-sensitively.
//! Validation enforces a single root, no self-children, no empty child
//! lists, no duplicate parentage, no cycles, and reachability of every node.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::error::{contract, Result};
use crate::rng;

pub const ROOT: &str = "entity";

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum TreeError {
    #[error("document is not valid JSON: {0}")]
    Json(String),
    #[error("document must be a JSON object of parent -> child list")]
    NotAnObject,
    #[error("children of `{node}` must be an array of strings")]
    BadChildList { node: String },
    #[error("an empty node name appears under `{node}`")]
    EmptyName { node: String },
    #[error("`{node}` appears as a key more than once")]
    DuplicateKey { node: String },
    #[error("root `entity` is missing")]
    MissingRoot,
    #[error("root `entity` is listed as a child of `{parent}`")]
    RootHasParent { parent: String },
    #[error("`{node}` lists itself as a child")]
    SelfChild { node: String },
    #[error("`{node}` has an empty child list")]
    EmptyChildList { node: String },
    #[error("`{node}` has two parents: `{first}` and `{second}`")]
    DuplicateParent {
        node: String,
        first: String,
        second: String,
    },
    #[error("cycle through `{node}`")]
    Cycle { node: String },
    #[error("`{node}` does not lead back to `entity`")]
    Unreachable { node: String },
}

/// Applies the name canonicalization used for every tree and class list.
pub fn normalize_name(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Real,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub name: String,
    pub kind: NodeKind,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub depth: usize,
}

/// A validated hierarchy. Nodes are stored in breadth-first order from the
/// root, children in document order, so node ids are stable for a document.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTree {
    nodes: Vec<NodeRecord>,
    index: HashMap<String, NodeId>,
    parent_ids: Vec<Option<NodeId>>,
    child_ids: Vec<Vec<NodeId>>,
}

struct RawTree {
    keys: Vec<String>,
    children: HashMap<String, Vec<String>>,
    parent_of: HashMap<String, String>,
    errors: Vec<TreeError>,
}

fn read_document(document: &str) -> std::result::Result<RawTree, TreeError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| TreeError::Json(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(TreeError::NotAnObject);
    };

    let mut raw = RawTree {
        keys: Vec::new(),
        children: HashMap::new(),
        parent_of: HashMap::new(),
        errors: Vec::new(),
    };
    for (key, list) in &map {
        let parent = normalize_name(key);
        if parent.is_empty() {
            raw.errors.push(TreeError::EmptyName { node: key.clone() });
            continue;
        }
        if raw.children.contains_key(&parent) {
            raw.errors.push(TreeError::DuplicateKey { node: parent });
            continue;
        }
        let Value::Array(items) = list else {
            raw.errors.push(TreeError::BadChildList { node: parent });
            continue;
        };
        if items.is_empty() {
            raw.errors.push(TreeError::EmptyChildList {
                node: parent.clone(),
            });
        }
        let mut kids = Vec::with_capacity(items.len());
        for item in items {
            let Value::String(s) = item else {
                raw.errors.push(TreeError::BadChildList {
                    node: parent.clone(),
                });
                continue;
            };
            let child = normalize_name(s);
            if child.is_empty() {
                raw.errors.push(TreeError::EmptyName {
                    node: parent.clone(),
                });
                continue;
            }
            if child == parent {
                raw.errors.push(TreeError::SelfChild {
                    node: parent.clone(),
                });
                continue;
            }
            if child == ROOT {
                raw.errors.push(TreeError::RootHasParent {
                    parent: parent.clone(),
                });
                continue;
            }
            if let Some(first) = raw.parent_of.get(&child) {
                raw.errors.push(TreeError::DuplicateParent {
                    node: child.clone(),
                    first: first.clone(),
                    second: parent.clone(),
                });
                continue;
            }
            raw.parent_of.insert(child.clone(), parent.clone());
            kids.push(child);
        }
        raw.keys.push(parent.clone());
        raw.children.insert(parent, kids);
    }
    if !raw.children.contains_key(ROOT) {
        raw.errors.push(TreeError::MissingRoot);
    }
    Ok(raw)
}

/// Every structural problem in `document`, in discovery order.
pub fn structural_errors(document: &str) -> Vec<TreeError> {
    match build(document) {
        Ok(_) => Vec::new(),
        Err(errors) => errors,
    }
}

/// Parses and validates a tree document. Leaves are marked real and inner
/// nodes virtual; use [`SemanticTree::with_real_classes`] to apply a dataset
/// class list.
pub fn parse_tree(document: &str) -> std::result::Result<SemanticTree, TreeError> {
    build(document).map_err(|mut errors| errors.swap_remove(0))
}

fn build(document: &str) -> std::result::Result<SemanticTree, Vec<TreeError>> {
    let mut raw = read_document(document).map_err(|e| vec![e])?;

    let mut order: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    if raw.children.contains_key(ROOT) {
        let mut queue = VecDeque::from([ROOT.to_string()]);
        seen.insert(ROOT.to_string());
        while let Some(name) = queue.pop_front() {
            if let Some(kids) = raw.children.get(&name) {
                for kid in kids {
                    if seen.insert(kid.clone()) {
                        queue.push_back(kid.clone());
                    }
                }
            }
            order.push(name);
        }
    }

    // Anything not reached from the root either hangs off a cycle or off a
    // parentless stray node.
    let mut all: Vec<&String> = raw.keys.iter().collect();
    let mut extra: Vec<&String> = raw
        .parent_of
        .keys()
        .filter(|k| !raw.children.contains_key(*k))
        .collect();
    extra.sort();
    all.extend(extra);
    let mut reported: HashSet<String> = HashSet::new();
    for name in all {
        if seen.contains(name) || reported.contains(name) {
            continue;
        }
        let mut walk = vec![name.clone()];
        let mut cur = name.clone();
        let err = loop {
            match raw.parent_of.get(&cur) {
                Some(p) if walk.contains(p) => break TreeError::Cycle { node: p.clone() },
                Some(p) if seen.contains(p) => unreachable!("child of a reached node is reached"),
                Some(p) => {
                    walk.push(p.clone());
                    cur = p.clone();
                }
                None => break TreeError::Unreachable { node: name.clone() },
            }
        };
        // Everything on this walk shares the same root cause.
        reported.extend(walk);
        raw.errors.push(err);
    }

    if !raw.errors.is_empty() {
        let mut uniq = Vec::new();
        for e in raw.errors {
            if !uniq.contains(&e) {
                uniq.push(e);
            }
        }
        return Err(uniq);
    }

    let index: HashMap<String, NodeId> = order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let mut nodes = Vec::with_capacity(order.len());
    let mut parent_ids = Vec::with_capacity(order.len());
    let mut child_ids = Vec::with_capacity(order.len());
    let mut depths = vec![0usize; order.len()];
    for (i, name) in order.iter().enumerate() {
        let parent = raw.parent_of.get(name).cloned();
        let pid = parent.as_ref().map(|p| index[p]);
        if let Some(p) = pid {
            depths[i] = depths[p] + 1;
        }
        let children = raw.children.get(name).cloned().unwrap_or_default();
        child_ids.push(children.iter().map(|c| index[c]).collect());
        parent_ids.push(pid);
        nodes.push(NodeRecord {
            name: name.clone(),
            kind: if children.is_empty() {
                NodeKind::Real
            } else {
                NodeKind::Virtual
            },
            parent,
            children,
            depth: depths[i],
        });
    }
    Ok(SemanticTree {
        nodes,
        index,
        parent_ids,
        child_ids,
    })
}

/// Coverage of a dataset class list by a tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Dataset classes that do not occur in the tree.
    pub missing_real: Vec<String>,
    /// Tree leaves that are not dataset classes.
    pub unclaimed_leaves: Vec<String>,
    /// Dataset classes that sit on inner nodes; allowed, flagged for review.
    pub real_internal_nodes: Vec<String>,
}

impl CoverageReport {
    /// Coverage holds when no class is missing and no leaf is unclaimed.
    pub fn is_complete(&self) -> bool {
        self.missing_real.is_empty() && self.unclaimed_leaves.is_empty()
    }
}

/// Lists coverage problems between `tree` and `real_classes`.
pub fn check_coverage(tree: &SemanticTree, real_classes: &[String]) -> CoverageReport {
    let wanted: BTreeSet<String> = real_classes.iter().map(|c| normalize_name(c)).collect();
    let mut report = CoverageReport::default();
    for class in real_classes {
        let name = normalize_name(class);
        if !tree.contains(&name) && !report.missing_real.contains(&name) {
            report.missing_real.push(name);
        }
    }
    for node in &tree.nodes {
        if node.children.is_empty() && !wanted.contains(&node.name) {
            report.unclaimed_leaves.push(node.name.clone());
        }
        if !node.children.is_empty() && wanted.contains(&node.name) {
            report.real_internal_nodes.push(node.name.clone());
        }
    }
    report
}

/// Parses a class list: a JSON array of strings, or one class per line.
pub fn parse_class_list(text: &str) -> Result<Vec<String>> {
    let trimmed = text.trim_start_matches('\u{feff}').trim();
    let names: Vec<String> = if trimmed.starts_with('[') {
        let items: Vec<String> = serde_json::from_str(trimmed)?;
        items.iter().map(|s| normalize_name(s)).collect()
    } else {
        trimmed
            .lines()
            .map(normalize_name)
            .filter(|s| !s.is_empty())
            .collect()
    };
    Ok(names)
}

impl SemanticTree {
    /// Re-marks node kinds: a node is real iff it is in `real_classes`. The
    /// root always stays virtual.
    pub fn with_real_classes(mut self, real_classes: &[String]) -> Self {
        let wanted: HashSet<String> = real_classes.iter().map(|c| normalize_name(c)).collect();
        for node in &mut self.nodes {
            node.kind = if node.name != ROOT && wanted.contains(&node.name) {
                NodeKind::Real
            } else {
                NodeKind::Virtual
            };
        }
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub(crate) fn require(&self, name: &str) -> Result<NodeId> {
        self.id(name)
            .ok_or_else(|| contract(format!("unknown class `{name}`")))
    }

    pub fn node(&self, id: NodeId) -> &NodeRecord {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn get(&self, name: &str) -> Option<&NodeRecord> {
        self.id(name).map(|i| &self.nodes[i])
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent_ids[id]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.child_ids[id]
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id].depth
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn is_virtual(&self, id: NodeId) -> bool {
        self.nodes[id].kind == NodeKind::Virtual
    }

    /// Parent → child edges in breadth-first order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.len())
            .filter_map(|c| self.parent_ids[c].map(|p| (p, c)))
            .collect()
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(p, c)| (self.nodes[p].name.clone(), self.nodes[c].name.clone()))
            .collect()
    }

    pub fn real_classes(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Real)
            .map(|n| n.name.clone())
            .collect()
    }

    pub fn leaves(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .map(|n| n.name.clone())
            .collect()
    }

    /// Strict ancestors of `id`, nearest first, ending at the root.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent_ids[id];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent_ids[p];
        }
        out
    }

    /// Virtual strict ancestors of `classes`, root first (breadth-first order).
    pub fn ancestor_ids(&self, classes: &[NodeId]) -> Vec<NodeId> {
        let mut set = BTreeSet::new();
        for &c in classes {
            set.extend(
                self.ancestors(c)
                    .into_iter()
                    .filter(|&a| self.is_virtual(a)),
            );
        }
        set.into_iter().collect()
    }

    /// Serializes back to the parent → children JSON object.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for node in self.nodes.iter().filter(|n| !n.children.is_empty()) {
            map.insert(
                node.name.clone(),
                Value::Array(node.children.iter().cloned().map(Value::String).collect()),
            );
        }
        Value::Object(map).to_string()
    }
}

impl fmt::Display for SemanticTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for node in &self.nodes {
            let tag = match node.kind {
                NodeKind::Real => "",
                NodeKind::Virtual => " (virtual)",
            };
            writeln!(f, "{}{}{}", "  ".repeat(node.depth), node.name, tag)?;
        }
        Ok(())
    }
}

/// Virtual ancestors of the named classes, root first.
pub fn ancestors_for(tree: &SemanticTree, classes: &[String]) -> Result<Vec<String>> {
    let ids = classes
        .iter()
        .map(|c| tree.require(&normalize_name(c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(tree
        .ancestor_ids(&ids)
        .into_iter()
        .map(|i| tree.node(i).name.clone())
        .collect())
}

/// A `B{m} Inc{n}` class split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    pub split_label: String,
    pub seed: u64,
    pub tasks: Vec<Vec<String>>,
}

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }
}

/// Shuffles `real_classes` with the seeded stream and cuts it into a first
/// task of `base` classes (or `increment` when `base` is zero) followed by
/// tasks of `increment` classes.
pub fn make_task_stream(
    real_classes: &[String],
    base: usize,
    increment: usize,
    seed: u64,
) -> Result<TaskStream> {
    if increment == 0 {
        return Err(contract("increment must be positive"));
    }
    let total = real_classes.len();
    if base > total {
        return Err(contract(format!("base {base} exceeds {total} classes")));
    }
    if !(total - base).is_multiple_of(increment) || total == 0 {
        return Err(contract(format!(
            "{total} classes cannot be split as B{base} Inc{increment}"
        )));
    }
    let unique: HashSet<&String> = real_classes.iter().collect();
    if unique.len() != total {
        return Err(contract("class list contains duplicates"));
    }
    let mut order = real_classes.to_vec();
    rng::shuffle(&mut order, &mut rng::stream(seed));
    let mut tasks = Vec::new();
    let mut rest = &order[..];
    if base > 0 {
        tasks.push(rest[..base].to_vec());
        rest = &rest[base..];
    }
    for chunk in rest.chunks(increment) {
        tasks.push(chunk.to_vec());
    }
    Ok(TaskStream {
        split_label: format!("B{base} Inc{increment}"),
        seed,
        tasks,
    })
}
