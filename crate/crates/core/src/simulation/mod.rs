//! Data generating processes, coverage evaluation and replicated experiments.

mod evaluate;
mod experiment;
mod generators;
mod normal;

pub use evaluate::{evaluate, evaluate_bounds, EvaluationReport, OracleInfo, StratumRow};
pub use experiment::{
    resolve_c0, run_experiment, run_replication, AutoC0, C0Policy, ExperimentConfig, ExperimentReport,
    Method, MethodRun, MethodSummary, MondrianOptions, ReplicationResult, Spread, StratumSummary,
};
pub use generators::{generate, AftParams, GeneratorKind, GeneratorSpec, Simulated};
pub use normal::{lognormal_variance, norm_cdf, norm_quantile, oracle_quantile_aft};
