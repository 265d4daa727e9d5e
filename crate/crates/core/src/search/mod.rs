//! Budgeted per-task search.
//!
//! Each budget unit is one evaluation of a new candidate. The loop first
//! screens one root per family (most promising prior first), then repeats:
//! pick a family by transfer-augmented UCB, sample a parent inside it,
//! ask the proposer for a typed edit, execute the child with repair, and
//! write the outcome back to memory.

mod execute;
mod propose;
mod sampler;
mod select;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::memory::{MemoryStore, RefinementRecord, SolutionRecord};
use crate::model::{
    best_node, Descriptor, EditType, ModelFamilyId, SearchForest, SolutionNode, TaskSpec,
    TypedEdit, FAMILY_KEY,
};
use crate::stats;
use crate::transfer::{self, TransferConfig};

pub use execute::{execute_candidate, ExecutionSummary};
pub use propose::{check_edit, family_history, propose_child, Rejection, HISTORY_WINDOW};
pub use sampler::{parent_probabilities, parent_weights, sample_parent, ParentCandidate};
pub use select::{argmax_family, exploit_estimate, select_family, FamilyStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub max_runtime_seconds: f64,
    pub max_memory_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// UCB exploration coefficient.
    pub alpha: f64,
    /// Parent-sampler sharpness.
    pub beta: f64,
    /// Node-transfer boost in the parent sampler.
    pub lambda: f64,
    /// MAD floor in the parent sampler.
    pub eps: f64,
    /// Weight of the seed-dispersion penalty in the exploit estimate.
    pub kappa: f64,
    pub max_repair_attempts: u32,
    pub max_proposal_retries: u32,
    pub resource_limits: Option<ResourceLimits>,
    pub transfer: TransferConfig,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.5,
            eps: 1e-9,
            kappa: 0.5,
            max_repair_attempts: 3,
            max_proposal_retries: 3,
            resource_limits: None,
            transfer: TransferConfig::default(),
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("kappa", self.kappa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        self.transfer.validate()
    }
}

/// Source of typed edits (an LLM in production; scripted in tests).
pub trait Proposer {
    /// Must be deterministic in `(parent, history, seed)`.
    fn propose(
        &self,
        parent: &SolutionNode,
        history: &[RefinementRecord],
        seed: u64,
    ) -> Option<TypedEdit>;
}

#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub descriptor: &'a Descriptor,
    pub task: &'a TaskSpec,
    pub seed: u64,
    /// Zero for the first attempt on a node, incremented on every retry.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Success {
        seed_scores: Vec<f64>,
        runtime_seconds: f64,
        memory_mb: f64,
    },
    Failure {
        error: String,
        runtime_seconds: f64,
        memory_mb: f64,
    },
}

/// Train-and-evaluate sandbox. Must be deterministic in the request.
pub trait Evaluator {
    fn evaluate(&self, request: EvalRequest<'_>) -> Evaluation;
}

/// Baseline solution for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCandidate {
    pub family: ModelFamilyId,
    pub descriptor: Descriptor,
}

impl RootCandidate {
    pub fn new(family: impl Into<String>, descriptor: Descriptor) -> Result<Self> {
        Ok(Self {
            family: ModelFamilyId::new(family)?,
            descriptor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub forest: SearchForest,
    pub best: Option<SolutionNode>,
    /// New-node evaluations performed; equals the budget unless stopped early.
    pub evaluations: u32,
    pub stopped_early: bool,
    pub family_stats: Vec<FamilyStats>,
}

struct Loop<'a> {
    task: &'a TaskSpec,
    evaluator: &'a dyn Evaluator,
    store: &'a mut MemoryStore,
    embeddings: &'a EmbeddingTable,
    cfg: &'a SearchConfig,
    rng: ChaCha8Rng,
    forest: SearchForest,
    node_priors: BTreeMap<String, f64>,
}

impl Loop<'_> {
    fn execute(&mut self, mut node: SolutionNode, edit: Option<&TypedEdit>) -> Result<()> {
        let seed: u64 = self.rng.random();
        execute_candidate(&mut node, self.task, self.evaluator, self.store, self.cfg, seed)?;
        let parent_id = node.parent_id.clone();
        match &parent_id {
            None => self.forest.insert_root(node.clone())?,
            Some(_) => self.forest.insert_child(node.clone())?,
        }
        self.store
            .append_solution(SolutionRecord::new(self.task.clone(), node.clone()))?;
        if let (Some(pid), Some(edit), Some(child_score)) = (parent_id, edit, node.val_score) {
            let parent = &self.forest.nodes[&pid];
            let parent_score = parent.val_score.ok_or(Error::NonFinite("parent val_score"))?;
            let delta = self.standardized_delta(parent_score, child_score)?;
            self.store.append_refinement(RefinementRecord {
                task_id: self.task.id.clone(),
                parent_descriptor: parent.descriptor.clone(),
                child_descriptor: node.descriptor.clone(),
                edit: edit.clone(),
                parent_score,
                child_score,
                score_delta_standardized: delta,
            })?;
        }
        Ok(())
    }

    /// Child minus parent after orientation, scaled by the task's current MAD.
    fn standardized_delta(&self, parent: f64, child: f64) -> Result<f64> {
        let metric = &self.task.metric;
        let scores: Vec<f64> = self
            .forest
            .completed()
            .filter_map(|n| n.aligned_score(metric))
            .collect();
        if scores.is_empty() {
            return Err(Error::EmptyTaskPool(self.task.id.clone()));
        }
        let med = stats::median(&scores);
        let scale = stats::mad(&scores, med).max(self.cfg.transfer.epsilon);
        Ok((metric.direction.align(child) - metric.direction.align(parent)) / scale)
    }

    fn node_prior(&mut self, node: &SolutionNode) -> Result<f64> {
        if let Some(v) = self.node_priors.get(&node.id) {
            return Ok(*v);
        }
        let v = transfer::node_transfer(
            self.store,
            node,
            self.task,
            self.embeddings,
            &self.cfg.transfer,
        )?
        .value;
        self.node_priors.insert(node.id.clone(), v);
        Ok(v)
    }

    fn fits_limits(&self, family: &ModelFamilyId) -> bool {
        match (&self.cfg.resource_limits, self.store.resource_profile(family)) {
            (Some(l), Some(p)) => {
                p.mean_runtime_seconds <= l.max_runtime_seconds && p.mean_memory_mb <= l.max_memory_mb
            }
            _ => true,
        }
    }

    fn refresh_exploit(&self, stats: &mut [FamilyStats]) {
        for s in stats.iter_mut() {
            s.best_exploit =
                exploit_estimate(&self.forest, &s.family, &self.task.metric, self.cfg.kappa);
        }
    }
}

/// Runs the budgeted loop on `task`. Historical evidence for the transfer
/// priors comes from `store` (the target task's own records are excluded),
/// and every execution is written back to it.
pub fn run_search(
    task: &TaskSpec,
    roots: &[RootCandidate],
    proposer: &dyn Proposer,
    evaluator: &dyn Evaluator,
    store: &mut MemoryStore,
    embeddings: &EmbeddingTable,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    task.validate()?;
    cfg.validate()?;
    if task.budget == 0 {
        return Err(Error::Budget(0, "zero-budget tasks are answered by routing"));
    }
    if roots.is_empty() {
        return Err(Error::EmptyInput("root families"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = roots.iter().find(|r| !seen.insert(&r.family)) {
        return Err(Error::invalid("families", format!("duplicate family {}", dup.family)));
    }

    let families: Vec<ModelFamilyId> = roots.iter().map(|r| r.family.clone()).collect();
    let priors = transfer::family_priors(store, &families, task, embeddings, &cfg.transfer)?;

    let mut order: Vec<&RootCandidate> = roots.iter().collect();
    order.sort_by(|a, b| {
        priors[&b.family]
            .value
            .total_cmp(&priors[&a.family].value)
            .then_with(|| a.family.cmp(&b.family))
    });

    let mut run = Loop {
        task,
        evaluator,
        store,
        embeddings,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        forest: SearchForest::new(&task.id),
        node_priors: BTreeMap::new(),
    };
    let mut used = 0u32;

    // screen roots
    let mut stats: Vec<FamilyStats> = Vec::new();
    for root in order {
        if used == task.budget {
            break;
        }
        let mut descriptor = root.descriptor.clone();
        descriptor.insert(FAMILY_KEY.to_owned(), root.family.to_string());
        let node = SolutionNode::root(
            run.forest.next_id(),
            &task.id,
            root.family.clone(),
            descriptor,
        );
        let id = node.id.clone();
        run.execute(node, None)?;
        used += 1;
        if run.forest.nodes[&id].is_completed() && run.fits_limits(&root.family) {
            stats.push(FamilyStats::new(
                root.family.clone(),
                priors[&root.family].clone(),
            ));
        }
    }
    run.refresh_exploit(&mut stats);

    // refine
    let mut t = 0u64;
    let mut stalls = 0usize;
    let mut stopped_early = false;
    while used < task.budget {
        stats.retain(|s| run.fits_limits(&s.family));
        if stats.is_empty() {
            stopped_early = true;
            break;
        }
        let family = select_family(&mut stats, t, cfg.alpha)?;
        t += 1;

        let pool_nodes: Vec<SolutionNode> = run
            .forest
            .completed()
            .filter(|n| n.family == family && !n.is_ensemble)
            .cloned()
            .collect();
        if pool_nodes.is_empty() {
            stalls += 1;
        } else {
            let mut priors = Vec::with_capacity(pool_nodes.len());
            for n in &pool_nodes {
                priors.push(run.node_prior(n)?);
            }
            let pool: Vec<ParentCandidate<'_>> = pool_nodes
                .iter()
                .zip(&priors)
                .map(|(n, p)| ParentCandidate {
                    node: n,
                    q: n.aligned_score(&task.metric).unwrap_or(f64::NEG_INFINITY),
                    transfer: *p,
                })
                .collect();
            let parent = sample_parent(&pool, cfg, &mut run.rng)?.clone();
            let proposal = propose_child(
                &parent,
                proposer,
                run.store,
                &run.forest,
                cfg.max_proposal_retries,
                &mut run.rng,
            );
            match proposal {
                Some((edit, descriptor)) => {
                    let mut child = SolutionNode::root(
                        run.forest.next_id(),
                        &task.id,
                        parent.family.clone(),
                        descriptor,
                    );
                    child.parent_id = Some(parent.id.clone());
                    child.edit_type = Some(edit.edit_type);
                    child.is_ensemble = edit.edit_type == EditType::Ensemble;
                    run.execute(child, Some(&edit))?;
                    used += 1;
                    stalls = 0;
                    run.refresh_exploit(&mut stats);
                    continue;
                }
                None => stalls += 1,
            }
        }
        if stalls > 4 * (run.forest.len() + 4) {
            log::warn!("search on {} stalled after {used} evaluations", task.id);
            stopped_early = true;
            break;
        }
    }
    if used < task.budget {
        stopped_early = true;
    }

    let best = best_node(&run.forest, &task.metric).cloned();
    Ok(SearchOutcome {
        forest: run.forest,
        best,
        evaluations: used,
        stopped_early,
        family_stats: stats,
    })
}
