//! Reference conditional densities for the per-condition TV protocol on
//! the 2-D shapes.

use alloc::vec::Vec;

use super::{tv_to_reference, Kde1D};
use crate::error::{Error, Result};
use crate::synthdata::{gen_shape, Shape, SliceDensity};

/// Pool size for shapes without a closed-form slice.
pub const REFERENCE_POOL: usize = 1_000_000;
/// Pool points nearest in `y` that feed a fallback reference KDE.
pub const REFERENCE_NEIGHBOURS: usize = 5000;

/// A large draw of one shape, sorted by `y`.
#[derive(Clone, Debug)]
pub struct ReferencePool {
    by_y: Vec<(f64, f64)>,
}

impl ReferencePool {
    pub fn new(shape: Shape, n: usize, seed: u64) -> Result<Self> {
        let d = gen_shape(shape, n, seed)?;
        let mut by_y: Vec<(f64, f64)> = (0..d.n()).map(|i| (d.y(i)[0], d.x(i)[0])).collect();
        by_y.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { by_y })
    }

    pub fn len(&self) -> usize {
        self.by_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_y.is_empty()
    }

    /// `x` values of the `k` pool points whose `y` is closest to `y`.
    pub fn nearest(&self, y: f64, k: usize) -> Vec<f64> {
        let n = self.by_y.len();
        let k = k.min(n);
        let mut hi = self.by_y.partition_point(|p| p.0 < y);
        let mut lo = hi;
        while hi - lo < k {
            let take_lo = match (lo > 0, hi < n) {
                (true, true) => y - self.by_y[lo - 1].0 <= self.by_y[hi].0 - y,
                (true, false) => true,
                (false, _) => false,
            };
            if take_lo {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        self.by_y[lo..hi].iter().map(|p| p.1).collect()
    }
}

#[derive(Clone, Debug)]
pub enum SliceReference {
    Exact(SliceDensity),
    Kde(Kde1D),
}

impl SliceReference {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Self::Exact(s) => s.density(x),
            Self::Kde(k) => k.density(x),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Exact(s) => s.support(),
            Self::Kde(k) => (k.min() - 3.0 * k.bandwidth(), k.max() + 3.0 * k.bandwidth()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact(_))
    }
}

/// The exact slice density of `shape` at `y` when one exists, otherwise a
/// KDE of the pool's nearest neighbours in `y`.
pub fn shape_reference(shape: Shape, y: f64, pool: Option<&ReferencePool>) -> Result<SliceReference> {
    if let Some(s) = shape.slice_density(y) {
        return Ok(SliceReference::Exact(s));
    }
    let pool = pool.ok_or_else(|| {
        Error::InvalidArgument(alloc::format!("{} has no closed-form slice at y = {y}; a reference pool is required", shape.name()))
    })?;
    Ok(SliceReference::Kde(Kde1D::fit(&pool.nearest(y, REFERENCE_NEIGHBOURS))?))
}

/// TV between the KDE of `samples` and `reference`.
pub fn slice_tv(samples: &[f64], reference: &SliceReference) -> Result<f64> {
    tv_to_reference(samples, |x| reference.density(x), reference.support())
}
