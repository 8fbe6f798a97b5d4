use alloc::vec::Vec;

use super::t_quantile;
use crate::error::{Error, Result};

/// `x̄ ± t_{N*−1}(1 − α/2)·s·√(1 + 1/N*)` from `N*` generated samples.
/// Constant samples give a zero-width interval.
pub fn prediction_interval(samples: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("prediction interval needs at least 2 samples".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ProbabilityOutOfRange(alpha));
    }
    let n = samples.len();
    let mean = crate::linalg::mean(samples);
    let s = crate::linalg::sample_std(samples);
    if s == 0.0 {
        return Ok((mean, mean));
    }
    let q = t_quantile((n - 1) as u32, 1.0 - alpha / 2.0)?;
    let half = q * s * libm::sqrt(1.0 + 1.0 / n as f64);
    Ok((mean - half, mean + half))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalCase {
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalReport {
    pub alpha: f64,
    pub cases: Vec<IntervalCase>,
    pub coverage: f64,
}

impl IntervalReport {
    pub fn new(alpha: f64, intervals: &[(f64, f64)], truths: &[f64]) -> Result<Self> {
        let coverage = coverage(intervals, truths)?;
        let cases = intervals
            .iter()
            .zip(truths)
            .map(|(&(lower, upper), &truth)| IntervalCase {
                lower,
                upper,
                truth,
                hit: lower <= truth && truth <= upper,
            })
            .collect();
        Ok(Self { alpha, cases, coverage })
    }
}

/// Fraction of truths inside their interval (endpoints count as inside).
pub fn coverage(intervals: &[(f64, f64)], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            what: "intervals vs truths",
            expected: intervals.len(),
            got: truths.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let hits = intervals.iter().zip(truths).filter(|(&(lo, hi), &x)| lo <= x && x <= hi).count();
    Ok(hits as f64 / intervals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_interval() {
        let (lo, hi) = prediction_interval(&[-1.0, 1.0], 0.5).unwrap();
        assert!((hi - lo - 3.464_101_615_137_754_6).abs() < 1e-7);
        assert!((lo + hi).abs() < 1e-15);
    }

    #[test]
    fn alpha_near_one_shrinks() {
        let (lo, hi) = prediction_interval(&[0.0, 1.0, 2.0], 0.999_999).unwrap();
        assert!(hi - lo > 0.0 && hi - lo < 1e-4);
    }

    #[test]
    fn constant_samples_give_point_interval() {
        assert_eq!(prediction_interval(&[4.0, 4.0, 4.0], 0.05).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn coverage_examples() {
        let iv = [(0.0, 1.0), (2.0, 3.0)];
        assert_eq!(coverage(&iv, &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(coverage(&iv, &[5.0, -1.0]).unwrap(), 0.0);
        assert!(coverage(&iv, &[0.5]).is_err());
        let r = IntervalReport::new(0.05, &iv, &[0.5, 9.0]).unwrap();
        assert_eq!(r.coverage, 0.5);
        assert!(r.cases[0].hit && !r.cases[1].hit);
    }
}
