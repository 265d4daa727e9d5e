use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Descriptor, Direction, EditType, MetricSpec, ModelFamilyId, TaskSpec, TaskType};
use crate::stats::sigmoid;

/// Scripted failures: attempts below `fail_first` fail with `message` unless
/// the descriptor already carries every pair in `remedy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub fail_first: u32,
    pub message: String,
    pub remedy: Descriptor,
}

fn default_gain_decay() -> f64 {
    0.5
}

/// A task with a known ground-truth utility model.
///
/// A root of family `f` has utility `family_means[f]`. The k-th application
/// of `beneficial_edit` along a lineage adds `edit_gain * gain_decay^(k-1)`;
/// other edit types add nothing. Utility is clipped to `[0, 1]`; the score
/// reported under a lower-is-better metric is `1 - utility`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub family_means: BTreeMap<ModelFamilyId, f64>,
    pub noise_std: f64,
    pub edit_gain: f64,
    #[serde(default = "default_gain_decay")]
    pub gain_decay: f64,
    pub beneficial_edit: EditType,
    #[serde(default)]
    pub failure: Option<FailureInjection>,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.family_means.is_empty() {
            return Err(Error::invalid("family_means", "must be non-empty"));
        }
        if let Some((f, m)) = self.family_means.iter().find(|(_, m)| !(0.0..=1.0).contains(*m)) {
            return Err(Error::invalid("family_means", format!("mean {m} of {f} outside [0, 1]")));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", "must be finite and non-negative"));
        }
        if !(self.edit_gain >= 0.0 && self.edit_gain.is_finite()) {
            return Err(Error::invalid("edit_gain", "must be finite and non-negative"));
        }
        if !(self.gain_decay > 0.0 && self.gain_decay < 1.0) {
            return Err(Error::invalid("gain_decay", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn families(&self) -> Vec<ModelFamilyId> {
        self.family_means.keys().cloned().collect()
    }

    /// Family with the highest mean (smallest id on ties).
    pub fn best_family(&self) -> &ModelFamilyId {
        self.family_means
            .iter()
            .fold(None::<(&ModelFamilyId, f64)>, |acc, (f, m)| match acc {
                Some((_, best)) if best >= *m => acc,
                _ => Some((f, *m)),
            })
            .map(|(f, _)| f)
            .expect("validated non-empty")
    }

    pub fn score_to_utility(&self, score: f64) -> f64 {
        match self.spec.metric.direction {
            Direction::HigherIsBetter => score,
            Direction::LowerIsBetter => 1.0 - score,
        }
    }

    pub fn utility_to_score(&self, utility: f64) -> f64 {
        self.score_to_utility(utility)
    }
}

/// Knobs of [`generate_task_pool`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    /// Cross-task correlation of family means and of the beneficial edit.
    pub rho: f64,
    pub mean_range: (f64, f64),
    pub noise_std: f64,
    pub edit_gain: f64,
    pub gain_decay: f64,
    pub size_range: (u64, u64),
    pub budget: u32,
    pub id_prefix: String,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            mean_range: (0.35, 0.85),
            noise_std: 0.01,
            edit_gain: 0.04,
            gain_decay: 0.5,
            size_range: (200, 20_000),
            budget: 20,
            id_prefix: "syn".into(),
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho", format!("{} outside [0, 1]", self.rho)));
        }
        let (lo, hi) = self.mean_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("mean_range", "need 0 <= lo <= hi <= 1"));
        }
        if !(1 <= self.size_range.0 && self.size_range.0 <= self.size_range.1) {
            return Err(Error::invalid("size_range", "need 1 <= lo <= hi"));
        }
        Ok(())
    }
}

const CATEGORIES: [(&str, [&str; 3]); 5] = [
    ("absorption", ["permeability", "solubility", "bioavailability"]),
    ("distribution", ["plasma binding", "volume", "barrier penetration"]),
    ("metabolism", ["cyp2c9 inhibition", "cyp3a4 substrate", "cyp2d6 inhibition"]),
    ("excretion", ["clearance", "half life", "renal excretion"]),
    ("toxicity", ["herg blockade", "liver injury", "mutagenicity"]),
];

const REFINABLE: [EditType; 3] = [EditType::Architecture, EditType::Objective, EditType::DataProcessing];

pub fn family_ids(n: usize) -> Vec<ModelFamilyId> {
    (0..n).map(|i| ModelFamilyId::from(format!("f{i:02}").as_str())).collect()
}

/// Draws a deterministic pool of synthetic tasks.
///
/// Family means are `lo + (hi - lo) * sigmoid(1.5 * (sqrt(rho) g_f + sqrt(1 - rho) z_f))`
/// with `g` shared by every task and `z` drawn per task, so `rho = 1` gives
/// every task the same family ranking. The beneficial edit type is the
/// pool-wide one with probability `rho`.
pub fn generate_task_pool(
    n_tasks: usize,
    n_families: usize,
    rng_seed: u64,
    cfg: &PoolConfig,
) -> Result<Vec<SyntheticTask>> {
    if n_tasks == 0 {
        return Err(Error::invalid("n_tasks", "must be at least 1"));
    }
    if n_families == 0 {
        return Err(Error::invalid("n_families", "must be at least 1"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let families = family_ids(n_families);
    let shared: Vec<f64> = (0..n_families).map(|_| rng.sample(StandardNormal)).collect();
    let pool_edit = *REFINABLE.choose(&mut rng).expect("non-empty");
    let (lo, hi) = cfg.mean_range;
    let (a, b) = (cfg.rho.sqrt(), (1.0 - cfg.rho).sqrt());
    let (log_lo, log_hi) = ((cfg.size_range.0 as f64).ln(), (cfg.size_range.1 as f64).ln());

    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let family_means = families
            .iter()
            .zip(&shared)
            .map(|(f, g)| {
                let z: f64 = rng.sample(StandardNormal);
                (f.clone(), lo + (hi - lo) * sigmoid(1.5 * (a * g + b * z)))
            })
            .collect();
        let beneficial_edit = if rng.random::<f64>() < cfg.rho {
            pool_edit
        } else {
            *REFINABLE.choose(&mut rng).expect("non-empty")
        };
        let (category, endpoints) = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
        let endpoint = endpoints[rng.random_range(0..endpoints.len())];
        let classification = rng.random::<bool>();
        let (task_type, metric, kind) = if classification {
            (TaskType::BinaryClassification, MetricSpec::auroc(), "classification")
        } else {
            (TaskType::Regression, MetricSpec::spearman(), "regression")
        };
        let train_size = (log_lo + (log_hi - log_lo) * rng.random::<f64>()).exp().round() as u64;
        tasks.push(SyntheticTask {
            spec: TaskSpec {
                id: format!("{}{i:03}", cfg.id_prefix),
                task_type,
                metric,
                train_size: train_size.clamp(cfg.size_range.0, cfg.size_range.1),
                description: format!("{category} {endpoint} {kind} from molecular structure"),
                budget: cfg.budget,
            },
            family_means,
            noise_std: cfg.noise_std,
            edit_gain: cfg.edit_gain,
            gain_decay: cfg.gain_decay,
            beneficial_edit,
            failure: None,
        });
    }
    Ok(tasks)
}
