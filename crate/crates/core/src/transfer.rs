//! Cross-task transfer priors.
//!
//! Historical scores are made comparable in three steps (orient so larger is
//! better, robust-normalize within the task by median/MAD, squash into
//! `(-1, 1)`), then averaged across historical tasks with similarity weights.
//! Every prior is a convex combination of squashed scores, so it lies in
//! `[-1, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::memory::{MemoryStore, SolutionRecord};
use crate::model::{MetricSpec, ModelFamilyId, SolutionNode, TaskSpec};
use crate::stats::{self, cosine, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// MAD floor.
    pub epsilon: f64,
    /// Weight for a different metric of the same metric family.
    pub delta: f64,
    /// Decay rate of the dataset-size factor.
    pub gamma: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            delta: 0.1,
            gamma: 1.0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transfer.epsilon", self.epsilon),
            ("transfer.delta", self.delta),
            ("transfer.gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferScore {
    pub value: f64,
    /// Sum of the weights of contributing tasks.
    pub support: f64,
    pub contributing_tasks: Vec<(String, f64)>,
}

impl TransferScore {
    pub fn neutral() -> Self {
        Self {
            value: 0.0,
            support: 0.0,
            contributing_tasks: Vec::new(),
        }
    }

    fn from_terms(terms: Vec<(String, f64, f64)>) -> Self {
        let support: f64 = terms.iter().map(|(_, w, _)| w).sum();
        if support <= 0.0 {
            return Self::neutral();
        }
        let num: f64 = terms.iter().map(|(_, w, s)| w * s).sum();
        Self {
            value: (num / support).clamp(-1.0, 1.0),
            support,
            contributing_tasks: terms.into_iter().map(|(t, w, _)| (t, w)).collect(),
        }
    }
}

pub fn align_direction(x: f64, metric: &MetricSpec) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("score"));
    }
    Ok(metric.direction.align(x))
}

/// `(s_i - median) / max(MAD, eps)` element-wise.
pub fn robust_normalize(scores: &[f64], eps: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let med = stats::median(scores);
    let scale = stats::mad(scores, med).max(eps);
    Ok(scores.iter().map(|s| (s - med) / scale).collect())
}

/// `2·σ(x) − 1`.
pub fn squash(x: f64) -> f64 {
    2.0 * sigmoid(x) - 1.0
}

fn standardize_records<'a>(
    records: impl Iterator<Item = &'a SolutionRecord>,
    cfg: &TransferConfig,
) -> Result<BTreeMap<String, f64>> {
    let mut ids = Vec::new();
    let mut aligned = Vec::new();
    for r in records.filter(|r| r.node.is_completed()) {
        let v = r.node.val_score.ok_or(Error::NonFinite("val_score"))?;
        aligned.push(align_direction(v, &r.task.metric)?);
        ids.push(r.node.id.clone());
    }
    let normalized = robust_normalize(&aligned, cfg.epsilon)?;
    Ok(ids
        .into_iter()
        .zip(normalized)
        .map(|(id, s)| (id, squash(s)))
        .collect())
}

/// Standardized scores of one task's completed nodes, without touching the
/// store's cache.
pub fn compute_standardized_scores(
    store: &MemoryStore,
    task_id: &str,
    cfg: &TransferConfig,
) -> Result<BTreeMap<String, f64>> {
    let mut records = store
        .solutions()
        .iter()
        .filter(|r| r.task.id == task_id && r.node.is_completed())
        .peekable();
    if records.peek().is_none() {
        return Err(Error::EmptyTaskPool(task_id.to_owned()));
    }
    standardize_records(records, cfg)
}

/// Like [`compute_standardized_scores`] but also refreshes the cached
/// `standardized_score` on each record.
pub fn standardized_scores(
    store: &mut MemoryStore,
    task_id: &str,
    cfg: &TransferConfig,
) -> Result<BTreeMap<String, f64>> {
    let scores = compute_standardized_scores(store, task_id, cfg)?;
    store.set_standardized(task_id, &scores);
    Ok(scores)
}

/// Product of metric, type, size and description-similarity factors.
pub fn task_weight(
    source: &TaskSpec,
    target: &TaskSpec,
    emb_source: &[f64],
    emb_target: &[f64],
    cfg: &TransferConfig,
) -> Result<f64> {
    if emb_source.len() != emb_target.len() {
        return Err(Error::LengthMismatch {
            left: emb_source.len(),
            right: emb_target.len(),
        });
    }
    let w_metric = metric_weight(&source.metric, &target.metric, cfg.delta);
    let w_type = if source.task_type == target.task_type { 1.0 } else { 0.0 };
    let w_size = size_weight(source.log_size(), target.log_size(), cfg.gamma);
    let w_emb = cosine(emb_source, emb_target).max(0.0);
    Ok(w_metric * w_type * w_size * w_emb)
}

/// 1 on exact match, `delta` within the same metric family, else 0.
pub fn metric_weight(a: &MetricSpec, b: &MetricSpec, delta: f64) -> f64 {
    if a.name == b.name && a.direction == b.direction {
        1.0
    } else if a.family == b.family {
        delta
    } else {
        0.0
    }
}

pub fn size_weight(log_a: f64, log_b: f64, gamma: f64) -> f64 {
    (-gamma * (log_a - log_b).abs()).exp()
}

/// Per-task view of the store used by both priors.
struct HistoricalTask<'a> {
    task: &'a TaskSpec,
    weight: f64,
    standardized: BTreeMap<String, f64>,
    records: Vec<&'a SolutionRecord>,
}

fn historical_tasks<'a>(
    store: &'a MemoryStore,
    target: &TaskSpec,
    embeddings: &EmbeddingTable,
    cfg: &TransferConfig,
) -> Result<Vec<HistoricalTask<'a>>> {
    let Some(target_emb) = embeddings.get(&target.id) else {
        return Ok(Vec::new());
    };
    let mut by_task: BTreeMap<&str, Vec<&SolutionRecord>> = BTreeMap::new();
    for r in store.solutions() {
        if r.task.id != target.id && r.node.is_completed() {
            by_task.entry(r.task.id.as_str()).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for (task_id, records) in by_task {
        let Some(emb) = embeddings.get(task_id) else {
            continue;
        };
        let task = &records[0].task;
        let weight = task_weight(task, target, emb, target_emb, cfg)?;
        if weight <= 0.0 {
            continue;
        }
        let standardized = standardize_records(records.iter().copied(), cfg)?;
        out.push(HistoricalTask {
            task,
            weight,
            standardized,
            records,
        });
    }
    Ok(out)
}

/// Weighted average over historical tasks of the mean standardized score of
/// the family's completed nodes. Tasks without such nodes do not contribute.
pub fn family_transfer(
    store: &MemoryStore,
    family: &ModelFamilyId,
    target: &TaskSpec,
    embeddings: &EmbeddingTable,
    cfg: &TransferConfig,
) -> Result<TransferScore> {
    let mut terms = Vec::new();
    for h in historical_tasks(store, target, embeddings, cfg)? {
        let scores: Vec<f64> = h
            .records
            .iter()
            .filter(|r| &r.node.family == family)
            .map(|r| h.standardized[&r.node.id])
            .collect();
        if !scores.is_empty() {
            terms.push((h.task.id.clone(), h.weight, stats::mean(&scores)));
        }
    }
    Ok(TransferScore::from_terms(terms))
}

/// Weighted average over historical tasks of the standardized score of the
/// node matching `node` by family and edit type (roots match roots). Among
/// several matches the best standardized score wins, then the smallest id.
pub fn node_transfer(
    store: &MemoryStore,
    node: &SolutionNode,
    target: &TaskSpec,
    embeddings: &EmbeddingTable,
    cfg: &TransferConfig,
) -> Result<TransferScore> {
    let mut terms = Vec::new();
    for h in historical_tasks(store, target, embeddings, cfg)? {
        let matched = h
            .records
            .iter()
            .filter(|r| r.node.family == node.family && r.node.edit_type == node.edit_type)
            .map(|r| (h.standardized[&r.node.id], r.node.id.as_str()))
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)));
        if let Some((s, _)) = matched {
            terms.push((h.task.id.clone(), h.weight, s));
        }
    }
    Ok(TransferScore::from_terms(terms))
}

/// Family priors for every family, computed once per target task.
pub fn family_priors(
    store: &MemoryStore,
    families: &[ModelFamilyId],
    target: &TaskSpec,
    embeddings: &EmbeddingTable,
    cfg: &TransferConfig,
) -> Result<BTreeMap<ModelFamilyId, TransferScore>> {
    families
        .iter()
        .map(|f| Ok((f.clone(), family_transfer(store, f, target, embeddings, cfg)?)))
        .collect()
}
