//! Domain types shared across the crate: tasks, metrics, solution nodes,
//! typed edits and the per-task search forest.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat field map describing a solution (architecture, hyperparameters,
/// featurization, training procedure). Ordered so that serialization and
/// equality are canonical.
pub type Descriptor = BTreeMap<String, String>;

/// Descriptor key that names the node's model family.
pub const FAMILY_KEY: &str = "family";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    /// Orients `x` so that larger is better.
    pub fn align(self, x: f64) -> f64 {
        match self {
            Direction::HigherIsBetter => x,
            Direction::LowerIsBetter => -x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: Direction,
    /// Groups related metrics, e.g. `correlation` for Spearman and Pearson.
    pub family: String,
}

impl MetricSpec {
    pub fn new(name: impl Into<String>, direction: Direction, family: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            direction,
            family: family.into(),
        }
    }

    pub fn auroc() -> Self {
        Self::new("auroc", Direction::HigherIsBetter, "ranking")
    }

    pub fn auprc() -> Self {
        Self::new("auprc", Direction::HigherIsBetter, "ranking")
    }

    pub fn mae() -> Self {
        Self::new("mae", Direction::LowerIsBetter, "error")
    }

    pub fn spearman() -> Self {
        Self::new("spearman", Direction::HigherIsBetter, "correlation")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("metric.name", "must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    BinaryClassification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub task_type: TaskType,
    pub metric: MetricSpec,
    pub train_size: u64,
    pub description: String,
    /// Candidate train-and-evaluate cycles. Zero selects routing.
    pub budget: u32,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid("id", "must be non-empty"));
        }
        if self.train_size == 0 {
            return Err(Error::invalid("train_size", "must be at least 1"));
        }
        self.metric.validate()
    }

    pub fn log_size(&self) -> f64 {
        (self.train_size as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSignature {
    pub task_type: TaskType,
    pub metric: MetricSpec,
    pub log_size: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelFamilyId(String);

impl ModelFamilyId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::invalid("family", "must be non-empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelFamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ModelFamilyId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ModelFamilyId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EditType {
    Architecture,
    Objective,
    DataProcessing,
    Ensemble,
}

impl EditType {
    pub const ALL: [EditType; 4] = [
        EditType::Architecture,
        EditType::Objective,
        EditType::DataProcessing,
        EditType::Ensemble,
    ];

    pub fn key(self) -> &'static str {
        match self {
            EditType::Architecture => "architecture",
            EditType::Objective => "objective",
            EditType::DataProcessing => "data_processing",
            EditType::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Pending,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionNode {
    pub id: String,
    pub task_id: String,
    pub family: ModelFamilyId,
    pub parent_id: Option<String>,
    pub descriptor: Descriptor,
    pub edit_type: Option<EditType>,
    pub is_ensemble: bool,
    pub status: NodeStatus,
    /// Mean of `seed_scores`, in the task's native metric.
    pub val_score: Option<f64>,
    pub seed_scores: Vec<f64>,
    pub children_count: u32,
}

impl SolutionNode {
    pub fn root(
        id: impl Into<String>,
        task_id: impl Into<String>,
        family: ModelFamilyId,
        descriptor: Descriptor,
    ) -> Self {
        Self {
            id: id.into(),
            task_id: task_id.into(),
            family,
            parent_id: None,
            descriptor,
            edit_type: None,
            is_ensemble: false,
            status: NodeStatus::Pending,
            val_score: None,
            seed_scores: Vec::new(),
            children_count: 0,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn is_completed(&self) -> bool {
        self.status == NodeStatus::Completed
    }

    /// Marks the node completed with `val_score = mean(seed_scores)`.
    pub fn complete(&mut self, seed_scores: Vec<f64>) {
        let mean = crate::stats::mean(&seed_scores);
        self.seed_scores = seed_scores;
        self.val_score = Some(mean);
        self.status = NodeStatus::Completed;
    }

    pub fn fail(&mut self) {
        self.status = NodeStatus::Failed;
        self.val_score = None;
        self.seed_scores.clear();
    }

    /// Completed score oriented so that larger is better.
    pub fn aligned_score(&self, metric: &MetricSpec) -> Option<f64> {
        match (self.status, self.val_score) {
            (NodeStatus::Completed, Some(v)) if v.is_finite() => Some(metric.direction.align(v)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedEdit {
    pub edit_type: EditType,
    pub delta: Descriptor,
    pub rationale: String,
}

impl TypedEdit {
    pub fn validate(&self) -> Result<()> {
        if self.delta.is_empty() {
            return Err(Error::invalid("delta", "must be non-empty"));
        }
        Ok(())
    }

    /// Parent descriptor overridden by the delta.
    pub fn apply(&self, parent: &Descriptor) -> Descriptor {
        let mut out = parent.clone();
        for (k, v) in &self.delta {
            out.insert(k.clone(), v.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchForest {
    pub task_id: String,
    pub nodes: BTreeMap<String, SolutionNode>,
    pub roots: Vec<String>,
}

impl SearchForest {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SolutionNode> {
        self.nodes.get(id)
    }

    /// Id for the next node, zero-padded so lexicographic order is creation order.
    pub fn next_id(&self) -> String {
        format!("{}/n{:05}", self.task_id, self.nodes.len())
    }

    pub fn insert_root(&mut self, node: SolutionNode) -> Result<()> {
        if node.parent_id.is_some() {
            return Err(Error::invalid("parent_id", "root must not have a parent"));
        }
        if self.nodes.contains_key(&node.id) {
            return Err(Error::invalid("id", format!("duplicate node id {}", node.id)));
        }
        self.roots.push(node.id.clone());
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn insert_child(&mut self, node: SolutionNode) -> Result<()> {
        let parent_id = node
            .parent_id
            .clone()
            .ok_or_else(|| Error::invalid("parent_id", "child must name a parent"))?;
        if self.nodes.contains_key(&node.id) {
            return Err(Error::invalid("id", format!("duplicate node id {}", node.id)));
        }
        let parent = self
            .nodes
            .get_mut(&parent_id)
            .ok_or_else(|| Error::invalid("parent_id", format!("unknown parent {parent_id}")))?;
        parent.children_count += 1;
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn children_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a SolutionNode> + 'a {
        self.nodes
            .values()
            .filter(move |n| n.parent_id.as_deref() == Some(id))
    }

    pub fn completed(&self) -> impl Iterator<Item = &SolutionNode> {
        self.nodes.values().filter(|n| n.is_completed())
    }

    pub fn contains_descriptor(&self, descriptor: &Descriptor) -> bool {
        self.nodes.values().any(|n| &n.descriptor == descriptor)
    }
}

/// Completed node with the best score under `metric`; ties go to the
/// lexicographically smallest id.
pub fn best_node<'a>(forest: &'a SearchForest, metric: &MetricSpec) -> Option<&'a SolutionNode> {
    best_of(forest.nodes.values(), metric)
}

pub(crate) fn best_of<'a>(
    nodes: impl IntoIterator<Item = &'a SolutionNode>,
    metric: &MetricSpec,
) -> Option<&'a SolutionNode> {
    nodes
        .into_iter()
        .filter_map(|n| n.aligned_score(metric).map(|s| (s, n)))
        .max_by(|(sa, a), (sb, b)| {
            sa.partial_cmp(sb)
                .unwrap_or(Ordering::Equal)
                .then_with(|| b.id.cmp(&a.id))
        })
        .map(|(_, n)| n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node_id: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.node_id, self.rule, self.detail)
    }
}

/// Checks every forest and node invariant; an empty report means the forest
/// is well formed.
pub fn validate_forest(forest: &SearchForest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |node_id: &str, rule: &'static str, detail: String| {
        out.push(Violation {
            node_id: node_id.to_owned(),
            rule,
            detail,
        })
    };

    for root in &forest.roots {
        match forest.nodes.get(root) {
            None => push(root, "root-membership", "root id not present in nodes".into()),
            Some(n) if n.parent_id.is_some() => {
                push(root, "root-parent", "listed root has a parent".into())
            }
            _ => {}
        }
    }

    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for (key, node) in &forest.nodes {
        if key != &node.id {
            push(key, "id-key", format!("stored under key {key} but id is {}", node.id));
        }
        if node.task_id != forest.task_id {
            push(&node.id, "task-id", format!("belongs to task {}", node.task_id));
        }
        match &node.parent_id {
            Some(p) => {
                if forest.nodes.contains_key(p) {
                    *counts.entry(p.as_str()).or_default() += 1;
                } else {
                    push(&node.id, "missing-parent", format!("parent {p} not in forest"));
                }
                if node.edit_type.is_none() {
                    push(&node.id, "edit-type", "child without edit_type".into());
                }
            }
            None => {
                if node.edit_type.is_some() {
                    push(&node.id, "edit-type", "root with edit_type".into());
                }
                if !forest.roots.contains(&node.id) {
                    push(&node.id, "root-membership", "parentless node not listed in roots".into());
                }
            }
        }
        match (node.status, node.val_score) {
            (NodeStatus::Completed, None) => {
                push(&node.id, "score-status", "completed without val_score".into())
            }
            (NodeStatus::Completed, Some(v)) if !v.is_finite() => {
                push(&node.id, "score-status", format!("non-finite val_score {v}"))
            }
            (NodeStatus::Pending | NodeStatus::Failed, Some(_)) => {
                push(&node.id, "score-status", "val_score on a non-completed node".into())
            }
            _ => {}
        }
    }

    for node in forest.nodes.values() {
        let counted = counts.get(node.id.as_str()).copied().unwrap_or(0);
        if counted != node.children_count {
            push(
                &node.id,
                "children-count",
                format!("stored {} but {} children found", node.children_count, counted),
            );
        }
    }

    for cycle in find_cycles(forest) {
        let first = cycle.iter().next().cloned().unwrap_or_default();
        let members: Vec<_> = cycle.into_iter().collect();
        push(&first, "acyclicity", format!("cycle through {}", members.join(", ")));
    }
    out
}

fn find_cycles(forest: &SearchForest) -> Vec<BTreeSet<String>> {
    let mut seen_cycles: Vec<BTreeSet<String>> = Vec::new();
    let mut cleared: BTreeSet<&str> = BTreeSet::new();
    for start in forest.nodes.keys() {
        let mut path: Vec<&str> = Vec::new();
        let mut cur = Some(start.as_str());
        while let Some(id) = cur {
            if cleared.contains(id) {
                break;
            }
            if let Some(pos) = path.iter().position(|p| *p == id) {
                let cycle: BTreeSet<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                if !seen_cycles.contains(&cycle) {
                    seen_cycles.push(cycle);
                }
                break;
            }
            path.push(id);
            cur = forest
                .nodes
                .get(id)
                .and_then(|n| n.parent_id.as_deref())
                .filter(|p| forest.nodes.contains_key(*p));
        }
        cleared.extend(path);
    }
    seen_cycles
}
