use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{embed_tasks, HashedEmbedding};
use crate::error::{Error, Result};
use crate::memory::MemoryStore;
use crate::routing::route;
use crate::search::{run_search, EvalRequest, Evaluation, Evaluator, RootCandidate, SearchConfig};
use crate::stats;

use super::evaluator::{synthetic_evaluator, SyntheticProposer};
use super::pool::{generate_task_pool, PoolConfig, SyntheticTask};

pub const NORMALIZATION_NOTE: &str =
    "per held-out task min-max over the compared conditions (zero-route and each budget); all-equal conditions score 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmortizationConfig {
    pub budgets: Vec<u32>,
    pub pool_budget: u32,
    pub search: SearchConfig,
    pub embedding_dimension: usize,
    pub history_bias: f64,
}

impl Default for AmortizationConfig {
    fn default() -> Self {
        Self {
            budgets: vec![5, 10, 20],
            pool_budget: 20,
            search: SearchConfig::default(),
            embedding_dimension: 64,
            history_bias: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutResult {
    pub task_id: String,
    pub matched_task_id: Option<String>,
    /// Utility of the routed solution on this task; `None` if routing failed.
    pub zero_route: Option<f64>,
    /// Best utility of memoryless search per budget.
    pub budgeted: Vec<Option<f64>>,
    pub normalized_zero_route: Option<f64>,
    pub normalized_budgeted: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizationReport {
    pub budgets: Vec<u32>,
    pub tasks: Vec<HeldoutResult>,
    pub normalization: String,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| stats::mean(&v))
}

impl AmortizationReport {
    pub fn mean_zero_route(&self) -> Option<f64> {
        mean_of(self.tasks.iter().map(|t| t.zero_route))
    }

    pub fn mean_budgeted(&self) -> Vec<Option<f64>> {
        (0..self.budgets.len())
            .map(|i| mean_of(self.tasks.iter().map(|t| t.budgeted[i])))
            .collect()
    }

    pub fn normalized_zero_route(&self) -> Option<f64> {
        mean_of(self.tasks.iter().map(|t| t.normalized_zero_route))
    }

    pub fn normalized_budgeted(&self) -> Vec<Option<f64>> {
        (0..self.budgets.len())
            .map(|i| mean_of(self.tasks.iter().map(|t| t.normalized_budgeted[i])))
            .collect()
    }
}

fn roots(task: &SyntheticTask) -> Result<Vec<RootCandidate>> {
    task.families()
        .into_iter()
        .map(|f| RootCandidate::new(f.as_str(), Default::default()))
        .collect()
}

fn normalize(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| v.map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 1.0 }))
        .collect()
}

/// Searches every pool task into `store`, then for each held-out task
/// compares the routed solution against memoryless search at each budget.
pub fn amortization_experiment(
    pool: &[SyntheticTask],
    heldout: &[SyntheticTask],
    cfg: &AmortizationConfig,
    store: &mut MemoryStore,
) -> Result<AmortizationReport> {
    let pool_ids: BTreeSet<&str> = pool.iter().map(|t| t.spec.id.as_str()).collect();
    if let Some(t) = heldout.iter().find(|t| pool_ids.contains(t.spec.id.as_str())) {
        return Err(Error::invalid("heldout", format!("task {} is also in the pool", t.spec.id)));
    }
    if cfg.budgets.contains(&0) {
        return Err(Error::invalid("budgets", "budgeted conditions need budget >= 1"));
    }
    let provider = HashedEmbedding::new(cfg.embedding_dimension)?;
    let proposer = SyntheticProposer {
        history_bias: cfg.history_bias,
        ..SyntheticProposer::default()
    };
    let embeddings = embed_tasks(&provider, pool.iter().chain(heldout).map(|t| &t.spec))?;

    for (i, task) in pool.iter().enumerate() {
        task.validate()?;
        let mut spec = task.spec.clone();
        spec.budget = cfg.pool_budget;
        let search = SearchConfig {
            rng_seed: cfg.search.rng_seed.wrapping_add(i as u64),
            ..cfg.search.clone()
        };
        let evaluator = synthetic_evaluator(task.clone());
        run_search(&spec, &roots(task)?, &proposer, &evaluator, store, &embeddings, &search)?;
    }

    let mut results = Vec::with_capacity(heldout.len());
    for (i, task) in heldout.iter().enumerate() {
        task.validate()?;
        let evaluator = synthetic_evaluator(task.clone());
        let mut zero = task.spec.clone();
        zero.budget = 0;
        let (matched, zero_route) = match route(&zero, store, &provider, cfg.search.transfer.gamma) {
            Ok(decision) => {
                let outcome = evaluator.evaluate(EvalRequest {
                    descriptor: &decision.transferred_node.descriptor,
                    task: &zero,
                    seed: cfg.search.rng_seed,
                    attempt: 0,
                });
                let utility = match outcome {
                    Evaluation::Success { seed_scores, .. } => {
                        Some(task.score_to_utility(stats::mean(&seed_scores)))
                    }
                    Evaluation::Failure { .. } => None,
                };
                (Some(decision.matched_task_id), utility)
            }
            Err(Error::NoRoutableExperience(_)) => (None, None),
            Err(e) => return Err(e),
        };

        let mut budgeted = Vec::with_capacity(cfg.budgets.len());
        for &b in &cfg.budgets {
            let mut spec = task.spec.clone();
            spec.budget = b;
            let search = SearchConfig {
                rng_seed: cfg.search.rng_seed.wrapping_add(10_000 + i as u64),
                ..cfg.search.clone()
            };
            let mut empty = MemoryStore::new();
            let out = run_search(&spec, &roots(task)?, &proposer, &evaluator, &mut empty, &embeddings, &search)?;
            budgeted.push(out.best.and_then(|n| n.val_score).map(|s| task.score_to_utility(s)));
        }

        let mut all = vec![zero_route];
        all.extend(&budgeted);
        let norm = normalize(&all);
        results.push(HeldoutResult {
            task_id: task.spec.id.clone(),
            matched_task_id: matched,
            zero_route,
            budgeted,
            normalized_zero_route: norm[0],
            normalized_budgeted: norm[1..].to_vec(),
        });
    }
    Ok(AmortizationReport {
        budgets: cfg.budgets.clone(),
        tasks: results,
        normalization: NORMALIZATION_NOTE.into(),
    })
}

/// Seeded pool/held-out environment for [`run_amortization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmortizationSpec {
    pub n_pool: usize,
    pub n_heldout: usize,
    pub n_families: usize,
    pub pool: PoolConfig,
    pub config: AmortizationConfig,
    pub seeds: u64,
    pub base_seed: u64,
}

impl Default for AmortizationSpec {
    fn default() -> Self {
        Self {
            n_pool: 16,
            n_heldout: 6,
            n_families: 5,
            pool: PoolConfig::default(),
            config: AmortizationConfig::default(),
            seeds: 10,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizationSummary {
    pub budgets: Vec<u32>,
    pub seeds: u64,
    pub mean_zero_route: Option<f64>,
    pub mean_budgeted: Vec<Option<f64>>,
    /// Mean zero-route utility over mean utility at the largest budget.
    pub zero_route_ratio: Option<f64>,
    pub normalized_zero_route: Option<f64>,
    pub normalized_budgeted: Vec<Option<f64>>,
    pub normalization: String,
    pub per_seed: Vec<AmortizationReport>,
}

/// Splits a generated pool: the `n_pool` smallest tasks (by train size, then
/// id) form the experience pool, the rest are held out.
pub fn split_pool(mut tasks: Vec<SyntheticTask>, n_pool: usize) -> (Vec<SyntheticTask>, Vec<SyntheticTask>) {
    tasks.sort_by(|a, b| a.spec.train_size.cmp(&b.spec.train_size).then_with(|| a.spec.id.cmp(&b.spec.id)));
    let heldout = tasks.split_off(n_pool.min(tasks.len()));
    (tasks, heldout)
}

pub fn run_amortization(spec: &AmortizationSpec) -> Result<AmortizationSummary> {
    if spec.seeds == 0 {
        return Err(Error::invalid("seeds", "must be at least 1"));
    }
    if spec.n_heldout == 0 {
        return Err(Error::invalid("n_heldout", "must be at least 1"));
    }
    let mut per_seed = Vec::with_capacity(spec.seeds as usize);
    for s in 0..spec.seeds {
        let seed = spec.base_seed.wrapping_add(s);
        let tasks = generate_task_pool(spec.n_pool + spec.n_heldout, spec.n_families, seed, &spec.pool)?;
        let (pool, heldout) = split_pool(tasks, spec.n_pool);
        let cfg = AmortizationConfig {
            search: SearchConfig {
                rng_seed: spec.config.search.rng_seed.wrapping_add(seed.wrapping_mul(100_003)),
                ..spec.config.search.clone()
            },
            ..spec.config.clone()
        };
        let mut store = MemoryStore::new();
        per_seed.push(amortization_experiment(&pool, &heldout, &cfg, &mut store)?);
    }
    let k = spec.config.budgets.len();
    let mean_zero_route = mean_of(per_seed.iter().map(AmortizationReport::mean_zero_route));
    let mean_budgeted: Vec<Option<f64>> = (0..k)
        .map(|i| mean_of(per_seed.iter().map(|r| r.mean_budgeted()[i])))
        .collect();
    let largest = spec
        .config
        .budgets
        .iter()
        .enumerate()
        .max_by_key(|(_, b)| **b)
        .map(|(i, _)| i);
    let zero_route_ratio = match (mean_zero_route, largest.and_then(|i| mean_budgeted[i])) {
        (Some(z), Some(b)) if b > 0.0 => Some(z / b),
        _ => None,
    };
    Ok(AmortizationSummary {
        budgets: spec.config.budgets.clone(),
        seeds: spec.seeds,
        mean_zero_route,
        mean_budgeted,
        zero_route_ratio,
        normalized_zero_route: mean_of(per_seed.iter().map(AmortizationReport::normalized_zero_route)),
        normalized_budgeted: (0..k)
            .map(|i| mean_of(per_seed.iter().map(|r| r.normalized_budgeted()[i])))
            .collect(),
        normalization: NORMALIZATION_NOTE.into(),
        per_seed,
    })
}
