//! Multi-seed experiment harness: plans, execution, statistics and reports.

pub mod plan;
pub mod report;
pub mod runner;
pub mod stats;

pub use plan::{ExperimentPlan, MethodConfig, Preset};
pub use runner::{run_plan, ResultsMatrix, RunOptions};
pub use stats::{mean_std, wilcoxon_signed_rank, SignedRank};
