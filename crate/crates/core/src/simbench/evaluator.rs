use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::fnv1a;
use crate::memory::RefinementRecord;
use crate::model::{Descriptor, EditType, SolutionNode, TypedEdit, FAMILY_KEY};
use crate::search::{EvalRequest, Evaluation, Evaluator, Proposer};

use super::pool::SyntheticTask;

pub const SEEDS_PER_EVALUATION: usize = 5;

/// Descriptor key counting applications of an edit type along a lineage.
pub fn revision_key(edit: EditType) -> String {
    format!("rev.{}", edit.key())
}

fn revisions(descriptor: &Descriptor, edit: EditType) -> Result<u32, String> {
    match descriptor.get(&revision_key(edit)) {
        None => Ok(0),
        Some(v) => v
            .parse()
            .map_err(|_| format!("ValueError: invalid revision count '{v}' for {}", edit.key())),
    }
}

/// Evaluator backed by a [`SyntheticTask`]'s ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    task: SyntheticTask,
}

pub fn synthetic_evaluator(task: SyntheticTask) -> SyntheticEvaluator {
    SyntheticEvaluator { task }
}

impl SyntheticEvaluator {
    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    /// Noise-free utility of a descriptor.
    pub fn expected_utility(&self, descriptor: &Descriptor) -> Result<f64, String> {
        let family = descriptor
            .get(FAMILY_KEY)
            .ok_or_else(|| "KeyError: descriptor has no family".to_string())?;
        let base = self
            .task
            .family_means
            .get(family.as_str())
            .ok_or_else(|| format!("KeyError: unknown model family '{family}'"))?;
        let k = revisions(descriptor, self.task.beneficial_edit)?;
        let gain: f64 = (0..k)
            .map(|i| self.task.edit_gain * self.task.gain_decay.powi(i as i32))
            .sum();
        Ok((base + gain).clamp(0.0, 1.0))
    }

    fn cost(&self, descriptor: &Descriptor) -> (f64, f64) {
        let family = descriptor.get(FAMILY_KEY).map_or("", String::as_str);
        let idx = self
            .task
            .family_means
            .keys()
            .position(|f| f.as_str() == family)
            .unwrap_or(0) as f64;
        (20.0 + 15.0 * idx, 256.0 + 128.0 * idx)
    }

    fn injected_failure(&self, req: &EvalRequest<'_>) -> Option<String> {
        let inj = self.task.failure.as_ref()?;
        let remedied = inj
            .remedy
            .iter()
            .all(|(k, v)| req.descriptor.get(k) == Some(v));
        (req.attempt < inj.fail_first && !remedied).then(|| inj.message.clone())
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, req: EvalRequest<'_>) -> Evaluation {
        let (runtime_seconds, memory_mb) = self.cost(req.descriptor);
        let fail = |error: String| Evaluation::Failure {
            error,
            runtime_seconds: runtime_seconds * 0.1,
            memory_mb,
        };
        if let Some(msg) = self.injected_failure(&req) {
            return fail(msg);
        }
        let utility = match self.expected_utility(req.descriptor) {
            Ok(u) => u,
            Err(msg) => return fail(msg),
        };
        let canonical = serde_json::to_string(req.descriptor).unwrap_or_default();
        let key = fnv1a(format!("{}\u{1f}{canonical}", self.task.spec.id).as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(key ^ req.seed.rotate_left(17));
        let seed_scores = if self.task.noise_std == 0.0 {
            vec![self.task.utility_to_score(utility); SEEDS_PER_EVALUATION]
        } else {
            let noise = Normal::new(utility, self.task.noise_std).expect("validated noise");
            (0..SEEDS_PER_EVALUATION)
                .map(|_| self.task.utility_to_score(noise.sample(&mut rng).clamp(0.0, 1.0)))
                .collect()
        };
        Evaluation::Success {
            seed_scores,
            runtime_seconds,
            memory_mb,
        }
    }
}

/// Randomized proposer that bumps one edit type's revision counter.
///
/// With probability `history_bias` it reuses the edit type whose past
/// refinements in `history` gained most on average (when that mean is
/// positive); otherwise it picks uniformly from `edit_types`.
#[derive(Debug, Clone)]
pub struct SyntheticProposer {
    pub edit_types: Vec<EditType>,
    pub history_bias: f64,
}

impl Default for SyntheticProposer {
    fn default() -> Self {
        Self {
            edit_types: vec![EditType::Architecture, EditType::Objective, EditType::DataProcessing],
            history_bias: 0.5,
        }
    }
}

fn best_historical_edit(history: &[RefinementRecord]) -> Option<EditType> {
    EditType::ALL
        .iter()
        .filter_map(|e| {
            let deltas: Vec<f64> = history
                .iter()
                .filter(|r| r.edit.edit_type == *e)
                .map(|r| r.score_delta_standardized)
                .collect();
            (!deltas.is_empty()).then(|| (*e, deltas.iter().sum::<f64>() / deltas.len() as f64))
        })
        .filter(|(_, m)| *m > 0.0)
        .fold(None::<(EditType, f64)>, |acc, (e, m)| match acc {
            Some((_, best)) if best >= m => acc,
            _ => Some((e, m)),
        })
        .map(|(e, _)| e)
}

impl Proposer for SyntheticProposer {
    fn propose(&self, parent: &SolutionNode, history: &[RefinementRecord], seed: u64) -> Option<TypedEdit> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grounded = if rng.random::<f64>() < self.history_bias {
            best_historical_edit(history)
        } else {
            None
        };
        let edit_type = match grounded {
            Some(e) => e,
            None => *self.edit_types.choose(&mut rng)?,
        };
        let current = revisions(&parent.descriptor, edit_type).unwrap_or(0);
        let mut delta = Descriptor::new();
        delta.insert(revision_key(edit_type), (current + 1).to_string());
        delta.insert(
            format!("{}.variant", edit_type.key()),
            format!("v{}", rng.random_range(0..1_000_000u32)),
        );
        Some(TypedEdit {
            edit_type,
            delta,
            rationale: format!("revise {}", edit_type.key()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{normalize_error, ExecutionRecord, MemoryStore, Outcome};
    use crate::model::{MetricSpec, NodeStatus, TaskSpec, TaskType};
    use crate::search::{execute_candidate, SearchConfig};
    use crate::simbench::pool::FailureInjection;
    use approx::assert_abs_diff_eq;

    fn synthetic(noise: f64) -> SyntheticTask {
        SyntheticTask {
            spec: TaskSpec {
                id: "s".into(),
                task_type: TaskType::BinaryClassification,
                metric: MetricSpec::auroc(),
                train_size: 500,
                description: "toxicity".into(),
                budget: 5,
            },
            family_means: [("gnn".into(), 0.7), ("rf".into(), 0.6)].into(),
            noise_std: noise,
            edit_gain: 0.05,
            gain_decay: 0.5,
            beneficial_edit: EditType::Objective,
            failure: None,
        }
    }

    fn desc(pairs: &[(&str, &str)]) -> Descriptor {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn scores(e: &SyntheticEvaluator, d: &Descriptor, seed: u64) -> Vec<f64> {
        match e.evaluate(EvalRequest { descriptor: d, task: &e.task().spec, seed, attempt: 0 }) {
            Evaluation::Success { seed_scores, .. } => seed_scores,
            Evaluation::Failure { error, .. } => panic!("{error}"),
        }
    }

    #[test]
    fn noiseless_root_scores_its_mean() {
        let e = synthetic_evaluator(synthetic(0.0));
        let s = scores(&e, &desc(&[("family", "gnn")]), 3);
        assert_eq!(s, vec![0.7; 5]);
        let mut node = SolutionNode::root("s/n00000", "s", "gnn".into(), desc(&[("family", "gnn")]));
        node.complete(s);
        assert_eq!(node.val_score, Some(0.7));
    }

    #[test]
    fn beneficial_edits_follow_geometric_gain() {
        let e = synthetic_evaluator(synthetic(0.0));
        let root = e.expected_utility(&desc(&[("family", "gnn")])).unwrap();
        let d1 = e.expected_utility(&desc(&[("family", "gnn"), ("rev.objective", "1")])).unwrap();
        let d2 = e.expected_utility(&desc(&[("family", "gnn"), ("rev.objective", "2")])).unwrap();
        assert_abs_diff_eq!(d1 - root, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(d2 - d1, 0.025, epsilon = 1e-12);
        let other = e.expected_utility(&desc(&[("family", "gnn"), ("rev.architecture", "3")])).unwrap();
        assert_eq!(other, root);
    }

    #[test]
    fn deterministic_per_descriptor_and_seed() {
        let e = synthetic_evaluator(synthetic(0.05));
        let d = desc(&[("family", "rf")]);
        assert_eq!(scores(&e, &d, 9), scores(&e, &d, 9));
        assert_ne!(scores(&e, &d, 9), scores(&e, &d, 10));
        assert!(scores(&e, &d, 9).iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn lower_is_better_metric_reports_complement() {
        let mut t = synthetic(0.0);
        t.spec.metric = MetricSpec::mae();
        t.spec.task_type = TaskType::Regression;
        let e = synthetic_evaluator(t);
        assert_abs_diff_eq!(scores(&e, &desc(&[("family", "gnn")]), 0)[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn unknown_family_fails() {
        let e = synthetic_evaluator(synthetic(0.0));
        let d = desc(&[("family", "svm")]);
        let r = e.evaluate(EvalRequest { descriptor: &d, task: &e.task().spec, seed: 0, attempt: 0 });
        assert!(matches!(r, Evaluation::Failure { error, .. } if error.contains("svm")));
    }

    #[test]
    fn injected_failure_cured_by_stored_fix() {
        let msg = "ImportError: cannot import name 'scatter' from torch_geometric";
        let mut t = synthetic(0.0);
        t.failure = Some(FailureInjection {
            fail_first: u32::MAX,
            message: msg.into(),
            remedy: desc(&[("pin.torch_geometric", "2.3")]),
        });
        let e = synthetic_evaluator(t);
        let mut store = MemoryStore::new();
        store
            .append_execution(ExecutionRecord {
                task_id: "old".into(),
                node_id: "old/n00000".into(),
                family: "gnn".into(),
                outcome: Outcome::Success,
                signature: Some(normalize_error(msg)),
                fix: Some(desc(&[("pin.torch_geometric", "2.3")])),
                fix_verified: true,
                runtime_seconds: 1.0,
                memory_mb: 1.0,
                log_excerpt: String::new(),
            })
            .unwrap();
        let mut node = SolutionNode::root("s/n00000", "s", "gnn".into(), desc(&[("family", "gnn")]));
        let spec = e.task().spec.clone();
        execute_candidate(&mut node, &spec, &e, &mut store, &SearchConfig::default(), 1).unwrap();
        assert_eq!(node.status, NodeStatus::Completed);
        let ex = &store.executions()[1..];
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].outcome, Outcome::Failure);
        assert_eq!(ex[1].outcome, Outcome::Success);
    }

    #[test]
    fn proposer_bumps_revision_and_follows_history() {
        let p = SyntheticProposer { history_bias: 1.0, ..SyntheticProposer::default() };
        let parent = SolutionNode::root(
            "s/n00000",
            "s",
            "gnn".into(),
            desc(&[("family", "gnn"), ("rev.objective", "2")]),
        );
        let history = vec![RefinementRecord {
            task_id: "old".into(),
            parent_descriptor: desc(&[("family", "gnn")]),
            child_descriptor: desc(&[("family", "gnn"), ("rev.objective", "1")]),
            edit: TypedEdit {
                edit_type: EditType::Objective,
                delta: desc(&[("rev.objective", "1")]),
                rationale: String::new(),
            },
            parent_score: 0.5,
            child_score: 0.6,
            score_delta_standardized: 1.0,
        }];
        let e = p.propose(&parent, &history, 4).unwrap();
        assert_eq!(e.edit_type, EditType::Objective);
        assert_eq!(e.delta["rev.objective"], "3");
        assert_eq!(p.propose(&parent, &history, 4), Some(e));
    }
}
