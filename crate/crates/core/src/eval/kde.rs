use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Contributions beyond this many bandwidths are below 1e-21 of the peak.
const CUTOFF: f64 = 10.0;

/// Gaussian kernel density estimate with Silverman's bandwidth
/// `h = 1.06·σ̂·n^{−1/5}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde1D {
    sorted: Vec<f64>,
    h: f64,
}

impl Kde1D {
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("KDE needs at least 2 samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("KDE samples must be finite".into()));
        }
        let sd = crate::linalg::sample_std(samples);
        if !(sd > 0.0) {
            return Err(Error::DegenerateSamples);
        }
        let h = 1.06 * sd * libm::pow(samples.len() as f64, -0.2);
        Self::with_bandwidth(samples, h)
    }

    pub fn with_bandwidth(samples: &[f64], h: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("KDE samples"));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("bandwidth must be positive, got {h}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// `(1/(n h)) Σ φ((x − sᵢ)/h)`.
    pub fn density(&self, x: f64) -> f64 {
        let lo = self.sorted.partition_point(|&s| s < x - CUTOFF * self.h);
        let hi = self.sorted.partition_point(|&s| s <= x + CUTOFF * self.h);
        let inv = 1.0 / self.h;
        let sum: f64 = self.sorted[lo..hi]
            .iter()
            .map(|s| {
                let z = (x - s) * inv;
                libm::exp(-0.5 * z * z)
            })
            .sum();
        sum * inv / (self.sorted.len() as f64 * libm::sqrt(2.0 * PI))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_density() {
        let k = Kde1D::fit(&[-1.0, 1.0]).unwrap();
        let h = k.bandwidth();
        let expected = libm::exp(-0.5 / (h * h)) / (h * libm::sqrt(2.0 * PI));
        assert!((k.density(0.0) - expected).abs() < 1e-15);
        assert!((k.density(0.37) - k.density(-0.37)).abs() < 1e-15);
    }

    #[test]
    fn integrates_to_one() {
        let k = Kde1D::fit(&[0.1, 0.5, -2.0, 3.0, 3.1]).unwrap();
        let (lo, hi) = (k.min() - 6.0 * k.bandwidth(), k.max() + 6.0 * k.bandwidth());
        let n = 4096;
        let step = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            s += w * k.density(lo + i as f64 * step);
        }
        assert!((s * step - 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_samples_rejected() {
        assert_eq!(Kde1D::fit(&[2.0, 2.0, 2.0]), Err(Error::DegenerateSamples));
        assert!(Kde1D::fit(&[1.0]).is_err());
    }
}
