use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MetricSpec, ModelFamilyId, SearchForest};
use crate::stats;
use crate::transfer::TransferScore;

const DISPERSION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family: ModelFamilyId,
    /// Visit count, starts at 1.
    pub visits: u64,
    /// Best penalized utility of the family on the target task, in `[0, 1]`.
    pub best_exploit: f64,
    pub transfer: TransferScore,
}

impl FamilyStats {
    pub fn new(family: ModelFamilyId, transfer: TransferScore) -> Self {
        Self {
            family,
            visits: 1,
            best_exploit: 0.0,
            transfer,
        }
    }

    pub fn ucb_index(&self, t: u64, alpha: f64) -> f64 {
        self.best_exploit
            + alpha * (((t + 1) as f64).ln() / self.visits as f64).sqrt()
            + self.transfer.value
    }
}

/// Best per-node utility of `family`: within-task min-max of the oriented
/// score (best = 1, worst = 0, a lone value = 1) minus `kappa` times the
/// relative seed dispersion, clamped to `[0, 1]`.
pub fn exploit_estimate(
    forest: &SearchForest,
    family: &ModelFamilyId,
    metric: &MetricSpec,
    kappa: f64,
) -> f64 {
    let scored: Vec<_> = forest
        .completed()
        .filter_map(|n| n.aligned_score(metric).map(|s| (n, s)))
        .collect();
    let (lo, hi) = scored
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
            (lo.min(*s), hi.max(*s))
        });
    scored
        .iter()
        .filter(|(n, _)| &n.family == family)
        .map(|(n, s)| {
            let utility = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
            let val = n.val_score.unwrap_or_default();
            let dispersion = stats::std_dev(&n.seed_scores) / val.abs().max(DISPERSION_FLOOR);
            (utility - kappa * dispersion).clamp(0.0, 1.0)
        })
        .fold(0.0, f64::max)
}

/// Position of the family with the largest UCB index; ties go to the smallest
/// family id. Does not touch visit counts.
pub fn argmax_family(stats: &[FamilyStats], t: u64, alpha: f64) -> Result<usize> {
    if stats.is_empty() {
        return Err(Error::EmptyInput("family stats"));
    }
    let mut best = 0;
    let mut best_index = stats[0].ucb_index(t, alpha);
    for (i, s) in stats.iter().enumerate().skip(1) {
        let idx = s.ucb_index(t, alpha);
        if idx > best_index || (idx == best_index && s.family < stats[best].family) {
            best = i;
            best_index = idx;
        }
    }
    Ok(best)
}

/// Memory-augmented UCB choice. Increments the winner's visit count.
pub fn select_family(stats: &mut [FamilyStats], t: u64, alpha: f64) -> Result<ModelFamilyId> {
    if let Some(s) = stats.iter().find(|s| s.visits == 0) {
        return Err(Error::invalid("visits", format!("family {} has zero visits", s.family)));
    }
    let i = argmax_family(stats, t, alpha)?;
    stats[i].visits += 1;
    Ok(stats[i].family.clone())
}
