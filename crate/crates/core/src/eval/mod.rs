//! Evaluation metrics: Gaussian KDE, total variation on a grid, 1-D
//! Wasserstein-2, conditional-moment errors, Student-t prediction intervals
//! and coverage.

mod distance;
mod intervals;
mod kde;
mod reference;
mod student_t;

use alloc::string::String;
use alloc::vec::Vec;

pub use distance::{ks_two_sample, moment_mse, tv_distance, tv_to_reference, w2_1d, w2_vs_quantile, TV_GRID_POINTS};
pub use intervals::{coverage, prediction_interval, IntervalCase, IntervalReport};
pub use kde::Kde1D;
pub use reference::{shape_reference, slice_tv, ReferencePool, SliceReference, REFERENCE_NEIGHBOURS, REFERENCE_POOL};
pub use student_t::{regularized_incomplete_beta, t_cdf, t_quantile};

/// One named metric value, with an optional spread and wall-clock time.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub std: Option<f64>,
    pub runtime_secs: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
}

impl EvalReport {
    pub fn push(&mut self, metric: impl Into<String>, value: f64, std: Option<f64>) -> &mut MetricRecord {
        self.records.push(MetricRecord {
            metric: metric.into(),
            value,
            std,
            runtime_secs: None,
        });
        self.records.last_mut().unwrap()
    }

    pub fn get(&self, metric: &str) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.metric == metric)
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.records.extend(other.records);
    }
}

/// Mean and sample standard deviation (`n − 1`), `0` spread for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = crate::linalg::mean(values);
    let s = if values.len() > 1 {
        crate::linalg::sample_std(values)
    } else {
        0.0
    };
    (m, s)
}
