//! Persistent cross-task experience memory.
//!
//! Three append-only streams:
//!
//! * solutions: every executed node with its task snapshot,
//! * refinements: parent/child pairs joined by a typed edit,
//! * executions: one record per evaluator attempt, with failure signatures,
//!   verified fixes and resource usage.
//!
//! Snapshots are JSON Lines, one file per stream, in a store directory.

mod signature;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Descriptor, ModelFamilyId, NodeStatus, SolutionNode, TaskSpec, TypedEdit};

pub use signature::{normalize_error, FailureCategory, FailureSignature};

pub const SOLUTIONS_FILE: &str = "solutions.jsonl";
pub const REFINEMENTS_FILE: &str = "refinements.jsonl";
pub const EXECUTIONS_FILE: &str = "executions.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub task: TaskSpec,
    pub node: SolutionNode,
    /// Cached within-task standardized score in `[-1, 1]`.
    pub standardized_score: Option<f64>,
}

impl SolutionRecord {
    pub fn new(task: TaskSpec, node: SolutionNode) -> Self {
        Self {
            task,
            node,
            standardized_score: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.node.status {
            NodeStatus::Pending => {
                return Err(Error::RecordRejected {
                    rule: "status",
                    detail: format!("node {} is still pending", self.node.id),
                })
            }
            NodeStatus::Failed if self.standardized_score.is_some() => {
                return Err(Error::RecordRejected {
                    rule: "status",
                    detail: "standardized_score on a failed node".into(),
                })
            }
            NodeStatus::Completed if !self.node.val_score.is_some_and(f64::is_finite) => {
                return Err(Error::RecordRejected {
                    rule: "score",
                    detail: format!("completed node {} lacks a finite val_score", self.node.id),
                })
            }
            _ => {}
        }
        if let Some(s) = self.standardized_score {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::RecordRejected {
                    rule: "range [-1,1]",
                    detail: format!("standardized_score {s}"),
                });
            }
        }
        if self.node.task_id != self.task.id {
            return Err(Error::RecordRejected {
                rule: "task-id",
                detail: format!("node task {} vs record task {}", self.node.task_id, self.task.id),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub task_id: String,
    pub parent_descriptor: Descriptor,
    pub child_descriptor: Descriptor,
    pub edit: TypedEdit,
    pub parent_score: f64,
    pub child_score: f64,
    pub score_delta_standardized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub task_id: String,
    pub node_id: String,
    pub family: ModelFamilyId,
    pub outcome: Outcome,
    pub signature: Option<FailureSignature>,
    pub fix: Option<Descriptor>,
    pub fix_verified: bool,
    pub runtime_seconds: f64,
    pub memory_mb: f64,
    pub log_excerpt: String,
}

impl ExecutionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.outcome == Outcome::Failure && self.signature.is_none() {
            return Err(Error::RecordRejected {
                rule: "failure-signature",
                detail: "failure without signature".into(),
            });
        }
        if self.fix_verified && self.fix.is_none() {
            return Err(Error::RecordRejected {
                rule: "verified-fix",
                detail: "fix_verified without a fix".into(),
            });
        }
        if !(self.runtime_seconds >= 0.0 && self.memory_mb >= 0.0) {
            return Err(Error::RecordRejected {
                rule: "resources",
                detail: "runtime and memory must be non-negative".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub family: ModelFamilyId,
    pub mean_runtime_seconds: f64,
    pub mean_memory_mb: f64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolutionFilter {
    pub task_id: Option<String>,
    pub family: Option<ModelFamilyId>,
    pub status: Option<NodeStatus>,
}

impl SolutionFilter {
    pub fn task(id: impl Into<String>) -> Self {
        Self {
            task_id: Some(id.into()),
            ..Self::default()
        }
    }

    pub fn matches(&self, r: &SolutionRecord) -> bool {
        self.task_id.as_ref().is_none_or(|t| &r.task.id == t)
            && self.family.as_ref().is_none_or(|f| &r.node.family == f)
            && self.status.is_none_or(|s| r.node.status == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    solutions: Vec<SolutionRecord>,
    refinements: Vec<RefinementRecord>,
    executions: Vec<ExecutionRecord>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solutions(&self) -> &[SolutionRecord] {
        &self.solutions
    }

    pub fn refinements(&self) -> &[RefinementRecord] {
        &self.refinements
    }

    pub fn executions(&self) -> &[ExecutionRecord] {
        &self.executions
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty() && self.refinements.is_empty() && self.executions.is_empty()
    }

    pub fn append_solution(&mut self, record: SolutionRecord) -> Result<usize> {
        record.validate()?;
        self.solutions.push(record);
        Ok(self.solutions.len() - 1)
    }

    pub fn append_refinement(&mut self, record: RefinementRecord) -> Result<usize> {
        record.edit.validate()?;
        self.refinements.push(record);
        Ok(self.refinements.len() - 1)
    }

    pub fn append_execution(&mut self, record: ExecutionRecord) -> Result<usize> {
        record.validate()?;
        self.executions.push(record);
        Ok(self.executions.len() - 1)
    }

    pub fn query_solutions(&self, filter: &SolutionFilter) -> Vec<&SolutionRecord> {
        self.solutions.iter().filter(|r| filter.matches(r)).collect()
    }

    /// Distinct task snapshots in order of first appearance.
    pub fn tasks(&self) -> Vec<&TaskSpec> {
        let mut seen = std::collections::BTreeSet::new();
        self.solutions
            .iter()
            .filter(|r| seen.insert(r.task.id.as_str()))
            .map(|r| &r.task)
            .collect()
    }

    /// Fix of the most recent verified execution whose signature matches.
    pub fn lookup_fix(&self, signature: &FailureSignature) -> Option<&Descriptor> {
        self.executions
            .iter()
            .rev()
            .filter(|e| e.fix_verified)
            .find(|e| {
                e.signature
                    .as_ref()
                    .is_some_and(|s| s.normalized_message == signature.normalized_message)
            })
            .and_then(|e| e.fix.as_ref())
    }

    /// All verified fixes, latest per signature, in order of first appearance.
    pub fn verified_fixes(&self) -> Vec<(&FailureSignature, &Descriptor)> {
        let mut out: Vec<(&FailureSignature, &Descriptor)> = Vec::new();
        for e in self.executions.iter().filter(|e| e.fix_verified) {
            if let (Some(sig), Some(fix)) = (&e.signature, &e.fix) {
                match out
                    .iter_mut()
                    .find(|(s, _)| s.normalized_message == sig.normalized_message)
                {
                    Some(slot) => slot.1 = fix,
                    None => out.push((sig, fix)),
                }
            }
        }
        out
    }

    pub fn resource_profile(&self, family: &ModelFamilyId) -> Option<ResourceProfile> {
        let mut n = 0u64;
        let (mut rt, mut mem) = (0.0, 0.0);
        for e in self.executions.iter().filter(|e| &e.family == family) {
            n += 1;
            rt += e.runtime_seconds;
            mem += e.memory_mb;
        }
        (n > 0).then(|| ResourceProfile {
            family: family.clone(),
            mean_runtime_seconds: rt / n as f64,
            mean_memory_mb: mem / n as f64,
            sample_count: n,
        })
    }

    pub fn resource_profiles(&self) -> Vec<ResourceProfile> {
        let families: std::collections::BTreeSet<&ModelFamilyId> =
            self.executions.iter().map(|e| &e.family).collect();
        families
            .into_iter()
            .filter_map(|f| self.resource_profile(f))
            .collect()
    }

    /// Overwrites the cached standardized scores of one task's completed
    /// records. Keys are node ids.
    pub(crate) fn set_standardized(&mut self, task_id: &str, scores: &BTreeMap<String, f64>) {
        for r in self
            .solutions
            .iter_mut()
            .filter(|r| r.task.id == task_id && r.node.is_completed())
        {
            if let Some(s) = scores.get(&r.node.id) {
                r.standardized_score = Some(*s);
            }
        }
    }

    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_stream(&dir.join(SOLUTIONS_FILE), &self.solutions)?;
        write_stream(&dir.join(REFINEMENTS_FILE), &self.refinements)?;
        write_stream(&dir.join(EXECUTIONS_FILE), &self.executions)?;
        Ok(())
    }

    /// Rebuilds a store from a snapshot directory. Missing stream files are
    /// treated as empty streams.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "store directory not found"),
            ));
        }
        let mut store = MemoryStore::new();
        for (line, r) in read_stream::<SolutionRecord>(&dir.join(SOLUTIONS_FILE), "solutions")? {
            r.validate().map_err(|e| malformed("solutions", line, e))?;
            store.solutions.push(r);
        }
        for (line, r) in read_stream::<RefinementRecord>(&dir.join(REFINEMENTS_FILE), "refinements")?
        {
            r.edit.validate().map_err(|e| malformed("refinements", line, e))?;
            store.refinements.push(r);
        }
        for (line, r) in read_stream::<ExecutionRecord>(&dir.join(EXECUTIONS_FILE), "executions")? {
            r.validate().map_err(|e| malformed("executions", line, e))?;
            store.executions.push(r);
        }
        Ok(store)
    }
}

fn malformed(stream: &'static str, line: usize, e: Error) -> Error {
    Error::MalformedLine {
        stream,
        line,
        reason: e.to_string(),
    }
}

fn write_stream<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

fn read_stream<T: DeserializeOwned>(path: &Path, stream: &'static str) -> Result<Vec<(usize, T)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            stream,
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}
