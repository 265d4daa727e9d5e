use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SolutionNode;
use crate::stats::{self, sigmoid};

use super::SearchConfig;

/// A completed, non-ensemble node eligible as a parent.
#[derive(Debug, Clone, Copy)]
pub struct ParentCandidate<'a> {
    pub node: &'a SolutionNode,
    /// Oriented target-task score (larger is better).
    pub q: f64,
    /// Node-level transfer prior in `[-1, 1]`.
    pub transfer: f64,
}

/// Unnormalized sampling weights: robust performance through a sigmoid,
/// a breadth discount `1/(1+children)`, and the transfer boost `1 + λ·transfer`
/// (floored at zero).
pub fn parent_weights(pool: &[ParentCandidate<'_>], cfg: &SearchConfig) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("parent pool"));
    }
    if pool.iter().any(|c| !c.q.is_finite()) {
        return Err(Error::NonFinite("parent score"));
    }
    let q: Vec<f64> = pool.iter().map(|c| c.q).collect();
    let med = stats::median(&q);
    let scale = stats::mad(&q, med).max(cfg.eps);
    Ok(pool
        .iter()
        .map(|c| {
            let perf = sigmoid(cfg.beta * (c.q - med) / scale);
            let breadth = 1.0 / (1.0 + f64::from(c.node.children_count));
            let mut boost = 1.0 + cfg.lambda * c.transfer;
            if boost < 0.0 {
                log::warn!(
                    "transfer boost {boost} for node {} clamped to 0 (lambda {})",
                    c.node.id,
                    cfg.lambda
                );
                boost = 0.0;
            }
            perf * breadth * boost
        })
        .collect())
}

pub fn parent_probabilities(pool: &[ParentCandidate<'_>], cfg: &SearchConfig) -> Result<Vec<f64>> {
    let w = parent_weights(pool, cfg)?;
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        Ok(w.iter().map(|x| x / total).collect())
    } else {
        Ok(vec![1.0 / w.len() as f64; w.len()])
    }
}

/// Draws one parent with probability proportional to its weight.
pub fn sample_parent<'a, R: Rng + ?Sized>(
    pool: &[ParentCandidate<'a>],
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<&'a SolutionNode> {
    let p = parent_probabilities(pool, cfg)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, pi) in pool.iter().zip(&p) {
        acc += pi;
        if u < acc {
            return Ok(c.node);
        }
    }
    // rounding left u above the final cumulative sum
    let last = p.iter().rposition(|x| *x > 0.0).unwrap_or(pool.len() - 1);
    Ok(pool[last].node)
}
