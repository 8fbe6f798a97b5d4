//! Paired datasets, the sampling time grid, and the Gaussian interpolant.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub dx: usize,
    pub dy: usize,
    /// Per-coordinate `[lo, hi]` for X, when known.
    pub x_bounds: Option<Vec<(f64, f64)>>,
    /// Per-coordinate `[0, B]` for Y, when known.
    pub y_bounds: Option<Vec<(f64, f64)>>,
}

impl DataSpec {
    pub fn new(dx: usize, dy: usize) -> Result<Self> {
        let spec = Self {
            dx,
            dy,
            x_bounds: None,
            y_bounds: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 {
            return Err(Error::InvalidArgument("dx must be at least 1".into()));
        }
        check_bounds("x_bounds", self.x_bounds.as_deref(), self.dx)?;
        check_bounds("y_bounds", self.y_bounds.as_deref(), self.dy)?;
        Ok(())
    }
}

fn check_bounds(name: &str, bounds: Option<&[(f64, f64)]>, dim: usize) -> Result<()> {
    if let Some(b) = bounds {
        if b.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "{name} has {} entries, expected {dim}",
                b.len()
            )));
        }
        if let Some(&(lo, hi)) = b.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument(format!("{name}: need lo < hi, got [{lo}, {hi}]")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DataSpec,
    pub xs: Matrix,
    pub ys: Matrix,
}

impl Dataset {
    pub fn new(spec: DataSpec, xs: Matrix, ys: Matrix) -> Result<Self> {
        spec.validate()?;
        if xs.cols() != spec.dx {
            return Err(Error::DimensionMismatch {
                what: "X columns",
                expected: spec.dx,
                got: xs.cols(),
            });
        }
        if ys.cols() != spec.dy {
            return Err(Error::DimensionMismatch {
                what: "Y columns",
                expected: spec.dy,
                got: ys.cols(),
            });
        }
        if xs.rows() != ys.rows() {
            return Err(Error::DimensionMismatch {
                what: "Y rows",
                expected: xs.rows(),
                got: ys.rows(),
            });
        }
        Ok(Self { spec, xs, ys })
    }

    pub fn n(&self) -> usize {
        self.xs.rows()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.xs.row(i)
    }

    pub fn y(&self, i: usize) -> &[f64] {
        self.ys.row(i)
    }
}

/// Uniform Euler grid `t_k = k·T/N`, `k = 0..=N`, on `[0, T]` with `T < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    stop_time: f64,
    steps: usize,
}

impl FlowConfig {
    pub fn new(stop_time: f64, steps: usize) -> Result<Self> {
        if !(stop_time > 0.0 && stop_time < 1.0) {
            return Err(Error::TimeOutOfRange {
                t: stop_time,
                range: "(0, 1)",
            });
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("step count N must be at least 1".into()));
        }
        Ok(Self { stop_time, steps })
    }

    pub fn stop_time(&self) -> f64 {
        self.stop_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.stop_time / self.steps as f64
    }

    /// `t_k`; exact at both ends.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.stop_time
        } else {
            k as f64 * self.stop_time / self.steps as f64
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// `W_t = t·x + √(1−t²)·w`.
pub fn interpolant(x: &[f64], w: &[f64], t: f64) -> Result<Vec<f64>> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "interpolant noise",
            expected: x.len(),
            got: w.len(),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t, range: "[0, 1]" });
    }
    let s = libm::sqrt(1.0 - t * t);
    Ok(x.iter().zip(w).map(|(xi, wi)| t * xi + s * wi).collect())
}
