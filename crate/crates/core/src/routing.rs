//! Zero-budget routing: copy the best solution of the closest analog task.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::memory::{MemoryStore, SolutionFilter};
use crate::model::{best_node, SearchForest, SolutionNode, TaskSignature, TaskSpec};
use crate::stats::cosine;
use crate::transfer::size_weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankKey {
    pub size_proximity: f64,
    pub cosine: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogCandidate {
    pub task_id: String,
    pub key: RankKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub target_task_id: String,
    pub matched_task_id: String,
    pub rank_key: RankKey,
    pub transferred_node: SolutionNode,
    /// `(task_id, combined score)` in rank order.
    pub candidates_considered: Vec<(String, f64)>,
}

pub fn build_signature(task: &TaskSpec, provider: &dyn EmbeddingProvider) -> Result<TaskSignature> {
    task.validate()?;
    Ok(TaskSignature {
        task_type: task.task_type,
        metric: task.metric.clone(),
        log_size: task.log_size(),
        embedding: provider.embed_task(task)?,
    })
}

fn rank_key(signature: &TaskSignature, task: &TaskSpec, emb: &[f64], gamma: f64) -> Result<RankKey> {
    if emb.len() != signature.embedding.len() {
        return Err(Error::LengthMismatch {
            left: emb.len(),
            right: signature.embedding.len(),
        });
    }
    let size_proximity = size_weight(signature.log_size, task.log_size(), gamma);
    let cos = cosine(&signature.embedding, emb);
    Ok(RankKey {
        size_proximity,
        cosine: cos,
        combined: size_proximity * cos.max(0.0),
    })
}

/// Historical tasks of the same type, restricted to exact-metric matches if
/// any exist, else to the same metric family, else all of them; ordered by
/// combined score (descending), then task id.
pub fn rank_analog_candidates(
    signature: &TaskSignature,
    store: &MemoryStore,
    provider: &dyn EmbeddingProvider,
    gamma: f64,
) -> Result<Vec<AnalogCandidate>> {
    let typed: Vec<&TaskSpec> = store
        .tasks()
        .into_iter()
        .filter(|t| t.task_type == signature.task_type)
        .collect();
    let exact: Vec<&TaskSpec> = typed
        .iter()
        .copied()
        .filter(|t| t.metric.name == signature.metric.name && t.metric.direction == signature.metric.direction)
        .collect();
    let same_family: Vec<&TaskSpec> = typed
        .iter()
        .copied()
        .filter(|t| t.metric.family == signature.metric.family)
        .collect();
    let pool = if !exact.is_empty() {
        exact
    } else if !same_family.is_empty() {
        same_family
    } else {
        typed
    };

    let mut out = Vec::with_capacity(pool.len());
    for t in pool {
        let emb = provider.embed_task(t)?;
        out.push(AnalogCandidate {
            task_id: t.id.clone(),
            key: rank_key(signature, t, &emb, gamma)?,
        });
    }
    out.sort_by(|a, b| {
        b.key
            .combined
            .partial_cmp(&a.key.combined)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    Ok(out)
}

pub fn rank_analogs(
    signature: &TaskSignature,
    store: &MemoryStore,
    provider: &dyn EmbeddingProvider,
    gamma: f64,
) -> Result<Vec<(String, f64)>> {
    Ok(rank_analog_candidates(signature, store, provider, gamma)?
        .into_iter()
        .map(|c| (c.task_id, c.key.combined))
        .collect())
}

/// Best completed node recorded for `task_id`, judged by that task's metric.
pub fn best_recorded_node(store: &MemoryStore, task_id: &str) -> Option<SolutionNode> {
    let records = store.query_solutions(&SolutionFilter::task(task_id));
    let first = records.first()?;
    let mut forest = SearchForest::new(task_id);
    for r in &records {
        // later records of the same node supersede earlier ones
        forest.nodes.insert(r.node.id.clone(), r.node.clone());
    }
    best_node(&forest, &first.task.metric).cloned()
}

/// Routes a zero-budget task to the top-ranked analog that has a completed
/// node and returns that node unchanged.
pub fn route(
    task: &TaskSpec,
    store: &MemoryStore,
    provider: &dyn EmbeddingProvider,
    gamma: f64,
) -> Result<RoutingDecision> {
    if task.budget != 0 {
        return Err(Error::Budget(task.budget, "routing requires a zero budget"));
    }
    let signature = build_signature(task, provider)?;
    let ranked = rank_analog_candidates(&signature, store, provider, gamma)?;
    let candidates_considered: Vec<(String, f64)> = ranked
        .iter()
        .map(|c| (c.task_id.clone(), c.key.combined))
        .collect();
    for c in &ranked {
        if let Some(node) = best_recorded_node(store, &c.task_id) {
            return Ok(RoutingDecision {
                target_task_id: task.id.clone(),
                matched_task_id: c.task_id.clone(),
                rank_key: c.key,
                transferred_node: node,
                candidates_considered,
            });
        }
    }
    Err(Error::NoRoutableExperience(task.id.clone()))
}
