use std::collections::BTreeSet;

use crate::error::Result;
use crate::memory::{normalize_error, ExecutionRecord, FailureSignature, MemoryStore, Outcome};
use crate::model::{Descriptor, SolutionNode, TaskSpec};

use super::{EvalRequest, Evaluation, Evaluator, SearchConfig};

const LOG_EXCERPT_CHARS: usize = 240;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionSummary {
    pub attempts: u32,
    /// Store positions of the execution records written.
    pub records: Vec<usize>,
    /// Verified fix that turned a failure into a success, if any.
    pub verified_fix: Option<Descriptor>,
}

fn excerpt(text: &str) -> String {
    text.chars().take(LOG_EXCERPT_CHARS).collect()
}

/// Evaluates `node` with signature-based repair.
///
/// A failure whose signature has a verified fix in the store gets the fix
/// merged into the descriptor and is retried without consuming the repair
/// budget (each signature's fix is tried once). Other failures are retried
/// up to `max_repair_attempts` times before the node is marked failed. Every
/// attempt appends one execution record; the success that follows a fix marks
/// that fix verified.
pub fn execute_candidate(
    node: &mut SolutionNode,
    task: &TaskSpec,
    evaluator: &dyn Evaluator,
    store: &mut MemoryStore,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<ExecutionSummary> {
    let mut descriptor = node.descriptor.clone();
    let mut summary = ExecutionSummary {
        attempts: 0,
        records: Vec::new(),
        verified_fix: None,
    };
    let mut tried_fixes: BTreeSet<String> = BTreeSet::new();
    let mut pending_fix: Option<(FailureSignature, Descriptor)> = None;
    let mut escalations = 0u32;

    loop {
        let attempt = summary.attempts;
        summary.attempts += 1;
        let result = evaluator.evaluate(EvalRequest {
            descriptor: &descriptor,
            task,
            seed,
            attempt,
        });
        match result {
            Evaluation::Success {
                seed_scores,
                runtime_seconds,
                memory_mb,
            } => {
                let (signature, fix) = pending_fix.take().unzip();
                let verified = fix.is_some();
                summary.records.push(store.append_execution(ExecutionRecord {
                    task_id: task.id.clone(),
                    node_id: node.id.clone(),
                    family: node.family.clone(),
                    outcome: Outcome::Success,
                    signature,
                    fix: fix.clone(),
                    fix_verified: verified,
                    runtime_seconds,
                    memory_mb,
                    log_excerpt: format!("ok after {} attempt(s)", summary.attempts),
                })?);
                summary.verified_fix = fix;
                node.descriptor = descriptor;
                node.complete(seed_scores);
                return Ok(summary);
            }
            Evaluation::Failure {
                error,
                runtime_seconds,
                memory_mb,
            } => {
                pending_fix = None;
                let signature = normalize_error(&error);
                let fix = if tried_fixes.insert(signature.normalized_message.clone()) {
                    store.lookup_fix(&signature).cloned()
                } else {
                    None
                };
                summary.records.push(store.append_execution(ExecutionRecord {
                    task_id: task.id.clone(),
                    node_id: node.id.clone(),
                    family: node.family.clone(),
                    outcome: Outcome::Failure,
                    signature: Some(signature.clone()),
                    fix: fix.clone(),
                    fix_verified: false,
                    runtime_seconds,
                    memory_mb,
                    log_excerpt: excerpt(&error),
                })?);
                if let Some(fix) = fix {
                    descriptor.extend(fix.iter().map(|(k, v)| (k.clone(), v.clone())));
                    pending_fix = Some((signature, fix));
                    continue;
                }
                escalations += 1;
                if escalations > cfg.max_repair_attempts {
                    node.descriptor = descriptor;
                    node.fail();
                    return Ok(summary);
                }
            }
        }
    }
}
