//! Empirical laws, distances and goodness-of-fit statistics, and the
//! convergence experiments built on them.

mod distance;
mod empirical;
mod experiment;
mod verify;

pub use distance::{chi_square, ks_statistic, moments, normal_cdf, tv_distance, ChiSquare, TvBound};
pub use empirical::{EmpiricalLaw, EmpiricalSample};
pub use experiment::{
    run_convergence_experiment, Experiment, ExperimentParams, ExperimentReport, MetricRow, TheoremId, Trend,
};
pub use verify::{run_verify, Check, CheckOutcome, ExperimentConfig, OutputPaths, VerifyOutcome};
