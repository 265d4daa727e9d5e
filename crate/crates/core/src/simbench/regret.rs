use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelFamilyId;
use crate::search::{select_family, FamilyStats};
use crate::transfer::TransferScore;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModel {
    /// One uniform draw `u` per round; reward is `1` when `u < mean`.
    #[default]
    Bernoulli,
    /// `mean + std * z`, clipped to `[0, 1]`.
    ClippedNormal { std: f64 },
}

/// How the per-family bias enters the index after `n` visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSchedule {
    /// `b_f`
    Constant,
    /// `b_f / sqrt(n)`
    #[default]
    Decaying,
}

fn default_best_mean() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSpec {
    /// Sub-optimality gap per family; exactly one must be zero.
    pub gaps: BTreeMap<ModelFamilyId, f64>,
    pub horizon: usize,
    pub alpha: f64,
    #[serde(default)]
    pub transfer_bias: BTreeMap<ModelFamilyId, f64>,
    pub seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_best_mean")]
    pub best_mean: f64,
    #[serde(default)]
    pub reward: RewardModel,
    #[serde(default)]
    pub schedule: BiasSchedule,
}

impl RegretSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gaps.is_empty() {
            return Err(Error::invalid("gaps", "must name at least one family"));
        }
        let optimal = self.gaps.values().filter(|g| **g == 0.0).count();
        if optimal != 1 {
            return Err(Error::invalid("gaps", format!("exactly one family needs gap 0, found {optimal}")));
        }
        if let Some((f, g)) = self.gaps.iter().find(|(_, g)| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::invalid("gaps", format!("gap {g} of {f} must be finite and non-negative")));
        }
        if !(0.0..=1.0).contains(&self.best_mean) {
            return Err(Error::invalid("best_mean", "must lie in [0, 1]"));
        }
        if let Some((f, g)) = self.gaps.iter().find(|(_, g)| **g > self.best_mean) {
            return Err(Error::invalid("gaps", format!("gap {g} of {f} exceeds best_mean")));
        }
        for (f, b) in &self.transfer_bias {
            if !self.gaps.contains_key(f) {
                return Err(Error::invalid("transfer_bias", format!("unknown family {f}")));
            }
            if !(-1.0..=1.0).contains(b) {
                return Err(Error::invalid("transfer_bias", format!("bias {b} of {f} outside [-1, 1]")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if let RewardModel::ClippedNormal { std } = self.reward {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::invalid("reward.std", "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub horizon: usize,
    /// Mean over seeds of the cumulative pseudo-regret after each round.
    pub cumulative_regret: Vec<f64>,
    /// Population standard deviation over seeds, per round.
    pub regret_std: Vec<f64>,
    pub theoretical_bound: Vec<f64>,
    pub seeds: u64,
}

/// One seed's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrace {
    /// Family position (in id order) played each round.
    pub arms: Vec<usize>,
    pub cumulative_regret: Vec<f64>,
}

/// Right-hand side of the logarithmic regret bound after `t` rounds.
pub fn regret_bound(gaps: impl IntoIterator<Item = f64>, alpha: f64, t: usize) -> f64 {
    let ln_t = (t as f64).ln();
    gaps.into_iter()
        .filter(|g| *g > 0.0)
        .map(|g| 8.0 * (alpha * alpha + 1.0) * ln_t / g + (1.0 + PI * PI / 3.0) * g)
        .sum()
}

/// Runs the family selector as a plain bandit for one seed.
///
/// Every family is played once in id order; afterwards round `t` (counting
/// from zero over all rounds) plays `select_family` with the running mean
/// reward as the exploit term.
pub fn run_bandit(spec: &RegretSpec, seed: u64) -> Result<BanditTrace> {
    spec.validate()?;
    let families: Vec<&ModelFamilyId> = spec.gaps.keys().collect();
    let gaps: Vec<f64> = spec.gaps.values().copied().collect();
    let means: Vec<f64> = gaps.iter().map(|g| spec.best_mean - g).collect();
    let bias: Vec<f64> = families
        .iter()
        .map(|f| spec.transfer_bias.get(*f).copied().unwrap_or(0.0))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |arm: usize| -> f64 {
        match spec.reward {
            RewardModel::Bernoulli => {
                if rng.random::<f64>() < means[arm] {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::ClippedNormal { std } => {
                let z: f64 = rng.sample(StandardNormal);
                (means[arm] + std * z).clamp(0.0, 1.0)
            }
        }
    };

    let mut stats: Vec<FamilyStats> = families
        .iter()
        .map(|f| FamilyStats::new((*f).clone(), TransferScore::neutral()))
        .collect();
    let mut totals = vec![0.0; families.len()];
    let mut arms = Vec::with_capacity(spec.horizon);
    let mut cumulative = Vec::with_capacity(spec.horizon);
    let mut regret = 0.0;
    let mut record = |arm: usize, arms: &mut Vec<usize>, cumulative: &mut Vec<f64>| {
        regret += gaps[arm];
        arms.push(arm);
        cumulative.push(regret);
    };

    for (arm, total) in totals.iter_mut().enumerate().take(spec.horizon) {
        *total += draw(arm);
        record(arm, &mut arms, &mut cumulative);
    }
    for (s, total) in stats.iter_mut().zip(&totals) {
        s.best_exploit = total.clamp(0.0, 1.0);
    }

    for t in families.len()..spec.horizon {
        for (s, b) in stats.iter_mut().zip(&bias) {
            s.transfer.value = match spec.schedule {
                BiasSchedule::Constant => *b,
                BiasSchedule::Decaying => b / (s.visits as f64).sqrt(),
            };
        }
        let chosen = select_family(&mut stats, t as u64, spec.alpha)?;
        let arm = families
            .iter()
            .position(|f| **f == chosen)
            .expect("selected family is known");
        totals[arm] += draw(arm);
        stats[arm].best_exploit = (totals[arm] / stats[arm].visits as f64).clamp(0.0, 1.0);
        record(arm, &mut arms, &mut cumulative);
    }
    Ok(BanditTrace {
        arms,
        cumulative_regret: cumulative,
    })
}

/// Averages [`run_bandit`] over seeds `base_seed .. base_seed + seeds`.
pub fn run_regret_experiment(spec: &RegretSpec) -> Result<RegretReport> {
    spec.validate()?;
    let n = spec.horizon;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for s in 0..spec.seeds {
        let trace = run_bandit(spec, spec.base_seed.wrapping_add(s))?;
        for (i, r) in trace.cumulative_regret.iter().enumerate() {
            sum[i] += r;
            sum_sq[i] += r * r;
        }
    }
    let k = spec.seeds as f64;
    let cumulative_regret: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let regret_std = sum_sq
        .iter()
        .zip(&cumulative_regret)
        .map(|(sq, m)| (sq / k - m * m).max(0.0).sqrt())
        .collect();
    let theoretical_bound = (1..=n)
        .map(|t| regret_bound(spec.gaps.values().copied(), spec.alpha, t))
        .collect();
    Ok(RegretReport {
        horizon: n,
        cumulative_regret,
        regret_std,
        theoretical_bound,
        seeds: spec.seeds,
    })
}
