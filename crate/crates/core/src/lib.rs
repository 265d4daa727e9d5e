//! Experience-guided search over per-task solution forests.
//!
//! The crate is organised around a persistent cross-task memory
//! ([`memory::MemoryStore`]) that feeds three consumers:
//!
//! * [`transfer`] turns historical outcomes into bounded priors in `[-1, 1]`;
//! * [`search`] runs the budgeted loop (transfer-augmented UCB family
//!   selection, robust parent sampling, proposal, execution with repair);
//! * [`routing`] answers zero-budget tasks by copying the best verified
//!   solution of the closest analog task.
//!
//! [`simbench`] provides synthetic environments and experiment drivers
//! (regret, amortization, leaderboard aggregation).

pub mod embedding;
pub mod error;
pub mod memory;
pub mod model;
pub mod routing;
pub mod search;
pub mod simbench;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
pub use memory::{
    ExecutionRecord, FailureCategory, FailureSignature, MemoryStore, Outcome, RefinementRecord,
    ResourceProfile, SolutionFilter, SolutionRecord,
};
pub use model::{
    best_node, validate_forest, Descriptor, Direction, EditType, MetricSpec, ModelFamilyId,
    NodeStatus, SearchForest, SolutionNode, TaskSignature, TaskSpec, TaskType, TypedEdit,
    Violation,
};
pub use search::{
    EvalRequest, Evaluation, Evaluator, FamilyStats, Proposer, SearchConfig, SearchOutcome,
};
pub use transfer::{TransferConfig, TransferScore};
pub use routing::{route, RankKey, RoutingDecision};
pub use simbench::{
    AmortizationSpec, AmortizationSummary, BiasSchedule, LeaderboardReport, LeaderboardTable,
    PoolConfig, RegretReport, RegretSpec, RewardModel, SyntheticTask,
};
