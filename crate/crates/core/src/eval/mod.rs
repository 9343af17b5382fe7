//! Effectiveness evaluation and system comparison.

pub mod compare;
pub mod metrics;
pub mod stats;

pub use compare::{
    classify_quartile, classify_threshold, compare, delta_report, win_loss_reward_risk, CompareOptions,
    ComparisonReport, DeltaEntry, Difficulty, DifficultyMode, DifficultyPartition, NamedRun, PerQuery, RiskRewardRow,
};
pub use metrics::{average_precision, evaluate, ndcg_at, rr_at, EvalConfig, Metric, MetricResult};
pub use stats::{bonferroni, is_significant, paired_t_test, TTest};
