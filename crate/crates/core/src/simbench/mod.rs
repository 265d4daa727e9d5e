//! Synthetic environments and experiment drivers.

mod amortize;
mod evaluator;
mod leaderboard;
mod pool;
mod regret;

pub use amortize::{
    amortization_experiment, run_amortization, split_pool, AmortizationConfig, AmortizationReport,
    AmortizationSpec, AmortizationSummary, HeldoutResult, NORMALIZATION_NOTE,
};
pub use evaluator::{
    revision_key, synthetic_evaluator, SyntheticEvaluator, SyntheticProposer, SEEDS_PER_EVALUATION,
};
pub use leaderboard::{
    leaderboard_aggregate, minmax_normalize, rank_with_ties, Cell, LeaderboardReport,
    LeaderboardTable, MethodSummary, HEADER,
};
pub use pool::{family_ids, generate_task_pool, FailureInjection, PoolConfig, SyntheticTask};
pub use regret::{
    regret_bound, run_bandit, run_regret_experiment, BanditTrace, BiasSchedule, RegretReport,
    RegretSpec, RewardModel,
};
