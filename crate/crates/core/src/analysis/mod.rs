//! Offline evaluation: robust aggregation, bootstrap intervals, value-error
//! curves and a Monte-Carlo check of the clamped-return estimator.

mod aggregate;
mod bias;
mod theorem;

pub use aggregate::{
    iqm, percentile, stratified_bootstrap_ci, task_normalizers, uniform_filter, CiPoint, Normalizer, ScoreMatrix,
    TaskScores,
};
pub use bias::{normalized_abs_error, value_bias_curve, ValuePoint, BIAS_EPS};
pub use theorem::{theorem1_mc, McResult};
