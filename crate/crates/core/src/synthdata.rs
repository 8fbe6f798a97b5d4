//! Synthetic datasets: five 2-D shapes (`X` = horizontal coordinate, `Y` =
//! vertical coordinate) and three regression models with known conditional
//! moments.
//!
//! Shape constructions:
//!
//! * `four_squares`: uniform on four unit squares centred at `(±1, ±1)`.
//! * `checkerboard`: `x₁ ~ U(−2, 2)`, `x₂ = u + 2j − 2 + (⌊x₁ + 2⌋ mod 2)`
//!   with `u ~ U(0, 1)`, `j ∈ {0, 1}`: the alternating 4×4 board.
//! * `pinwheel`: five arms; `(a, b) ~ N(0, diag(0.3², 0.05²))`, `a ← a + 1`,
//!   rotated by `arm·2π/5 + 0.25·a·|a|`.
//! * `rings`: radius uniform on `{0.5, 1, 1.5, 2}`, uniform angle, isotropic
//!   noise `σ = 0.02`.
//! * `swiss_roll`: `θ ~ U(1.5π, 4.5π)`, `(θ cos θ, θ sin θ)·2/(4.5π)` plus
//!   `N(0, 0.05² I)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::data::{DataSpec, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oracle::{Atom, AtomMixture};
use crate::rng::RngStream;

const RING_RADII: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
const RING_NOISE: f64 = 0.02;
const ROLL_NOISE: f64 = 0.05;
const PINWHEEL_ARMS: usize = 5;
const PINWHEEL_RADIAL_SD: f64 = 0.3;
const PINWHEEL_TANGENT_SD: f64 = 0.05;
const PINWHEEL_TWIST: f64 = 0.25;

/// Curve nodes per unit of parameter range when turning a noisy curve into a
/// Gaussian mixture; spacing stays far below the noise scale.
const RING_NODES: usize = 4096;
const ROLL_NODES: usize = 16384;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    FourSquares,
    Checkerboard,
    Pinwheel,
    Rings,
    SwissRoll,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::FourSquares,
        Shape::Checkerboard,
        Shape::Pinwheel,
        Shape::Rings,
        Shape::SwissRoll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::FourSquares => "four_squares",
            Shape::Checkerboard => "checkerboard",
            Shape::Pinwheel => "pinwheel",
            Shape::Rings => "rings",
            Shape::SwissRoll => "swiss_roll",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|s| s.name() == name).ok_or_else(|| Error::UnknownName {
            kind: "shape",
            name: String::from(name),
        })
    }

    /// One draw `(x, y)`.
    pub fn draw(self, rng: &mut RngStream) -> (f64, f64) {
        match self {
            Shape::FourSquares => {
                let cx = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let cy = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                (cx + rng.uniform() - 0.5, cy + rng.uniform() - 0.5)
            }
            Shape::Checkerboard => {
                let x1 = rng.uniform_range(-2.0, 2.0);
                let u = rng.uniform();
                let j = rng.below(2) as f64;
                let col = libm::floor(x1 + 2.0) as i64;
                (x1, u + 2.0 * j - 2.0 + col.rem_euclid(2) as f64)
            }
            Shape::Pinwheel => {
                let arm = rng.below(PINWHEEL_ARMS) as f64;
                let a = PINWHEEL_RADIAL_SD * rng.gauss() + 1.0;
                let b = PINWHEEL_TANGENT_SD * rng.gauss();
                let theta = arm * 2.0 * PI / PINWHEEL_ARMS as f64 + PINWHEEL_TWIST * a * a.abs();
                let (s, c) = libm::sincos(theta);
                (c * a - s * b, s * a + c * b)
            }
            Shape::Rings => {
                let r = RING_RADII[rng.below(RING_RADII.len())];
                let (s, c) = libm::sincos(rng.uniform_range(0.0, 2.0 * PI));
                (r * c + RING_NOISE * rng.gauss(), r * s + RING_NOISE * rng.gauss())
            }
            Shape::SwissRoll => {
                let theta = rng.uniform_range(1.5 * PI, 4.5 * PI);
                let k = 2.0 / (4.5 * PI);
                let (s, c) = libm::sincos(theta);
                (k * theta * c + ROLL_NOISE * rng.gauss(), k * theta * s + ROLL_NOISE * rng.gauss())
            }
        }
    }

    /// Density of `X` given `Y = y` when it has a closed form (`None` for
    /// the pinwheel).
    pub fn slice_density(self, y: f64) -> Option<SliceDensity> {
        match self {
            Shape::FourSquares => {
                let inside = (0.5..=1.5).contains(&y.abs());
                inside.then(|| SliceDensity::uniform(vec![(-1.5, -0.5), (0.5, 1.5)]))
            }
            Shape::Checkerboard => {
                if !(-2.0..=2.0).contains(&y) {
                    return None;
                }
                let row = (libm::floor(y + 2.0) as i64).clamp(0, 3);
                let pieces = (0..4)
                    .filter(|c| c % 2 == row % 2)
                    .map(|c| (c as f64 - 2.0, c as f64 - 1.0))
                    .collect();
                Some(SliceDensity::uniform(pieces))
            }
            Shape::Pinwheel => None,
            Shape::Rings => {
                let mut centres = Vec::with_capacity(RING_RADII.len() * RING_NODES);
                for &r in &RING_RADII {
                    for i in 0..RING_NODES {
                        let (s, c) = libm::sincos(2.0 * PI * (i as f64 + 0.5) / RING_NODES as f64);
                        centres.push((r * c, r * s));
                    }
                }
                SliceDensity::from_curve(&centres, RING_NOISE, y)
            }
            Shape::SwissRoll => {
                let k = 2.0 / (4.5 * PI);
                let centres: Vec<(f64, f64)> = (0..ROLL_NODES)
                    .map(|i| {
                        let theta = 1.5 * PI + 3.0 * PI * (i as f64 + 0.5) / ROLL_NODES as f64;
                        let (s, c) = libm::sincos(theta);
                        (k * theta * c, k * theta * s)
                    })
                    .collect();
                SliceDensity::from_curve(&centres, ROLL_NOISE, y)
            }
        }
    }
}

/// A 1-D density used as the reference for per-condition TV.
#[derive(Clone, Debug, PartialEq)]
pub enum SliceDensity {
    /// Uniform over the union of disjoint intervals.
    Uniform { pieces: Vec<(f64, f64)>, height: f64 },
    /// `Σ wᵢ N(mᵢ, sd²)` with normalised weights.
    Gaussian { means: Vec<f64>, weights: Vec<f64>, sd: f64 },
}

impl SliceDensity {
    pub fn uniform(pieces: Vec<(f64, f64)>) -> Self {
        let total: f64 = pieces.iter().map(|(a, b)| b - a).sum();
        Self::Uniform { pieces, height: 1.0 / total }
    }

    /// Conditional of `x` at height `y` for an equal-weight mixture of
    /// isotropic Gaussians centred at `centres`.
    fn from_curve(centres: &[(f64, f64)], sd: f64, y: f64) -> Option<Self> {
        let logs: Vec<f64> = centres.iter().map(|&(_, cy)| -(y - cy) * (y - cy) / (2.0 * sd * sd)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max < -50.0 {
            return None;
        }
        let mut means = Vec::new();
        let mut weights = Vec::new();
        for (&(cx, _), &l) in centres.iter().zip(&logs) {
            let w = libm::exp(l - max);
            if w > 1e-16 {
                means.push(cx);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Some(Self::Gaussian { means, weights, sd })
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Self::Uniform { pieces, height } => {
                if pieces.iter().any(|&(a, b)| x >= a && x <= b) {
                    *height
                } else {
                    0.0
                }
            }
            Self::Gaussian { means, weights, sd } => {
                let norm = 1.0 / (sd * libm::sqrt(2.0 * PI));
                means
                    .iter()
                    .zip(weights)
                    .map(|(m, w)| {
                        let z = (x - m) / sd;
                        w * libm::exp(-0.5 * z * z)
                    })
                    .sum::<f64>()
                    * norm
            }
        }
    }

    /// An interval holding essentially all of the mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Uniform { pieces, .. } => pieces
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| (lo.min(a), hi.max(b))),
            Self::Gaussian { means, sd, .. } => {
                let (lo, hi) = means
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
                (lo - 6.0 * sd, hi + 6.0 * sd)
            }
        }
    }
}

/// `n` draws of `shape`, deterministic in `seed`.
pub fn gen_shape(shape: Shape, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let mut rng = RngStream::new(seed, 0x5_4a9e);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = shape.draw(&mut rng);
        xs.push(x);
        ys.push(y);
    }
    Dataset::new(DataSpec::new(1, 1)?, Matrix::from_vec(n, 1, xs)?, Matrix::from_vec(n, 1, ys)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegressionModel {
    /// `X = Y₁² + exp(Y₂ + 0.25Y₃) + cos(Y₄ + Y₅) + ε`.
    M1,
    /// `X = Y₁² + exp(Y₂ + 0.25Y₃) + Y₄ − Y₅ + (0.5 + 0.5Y₂² + 0.5Y₅²)ε`.
    M2,
    /// Equal mixture of `N(−Y, 0.25²)` and `N(Y, 0.25²)`.
    M3,
}

const M3_SD: f64 = 0.25;

impl RegressionModel {
    pub const ALL: [RegressionModel; 3] = [RegressionModel::M1, RegressionModel::M2, RegressionModel::M3];

    pub fn name(self) -> &'static str {
        match self {
            Self::M1 => "m1",
            Self::M2 => "m2",
            Self::M3 => "m3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownName {
                kind: "regression model",
                name: String::from(name),
            })
    }

    pub fn dy(self) -> usize {
        match self {
            Self::M1 | Self::M2 => 5,
            Self::M3 => 1,
        }
    }

    /// `Y` from its marginal, `Y ~ N(0, I)`.
    pub fn draw_condition(self, rng: &mut RngStream) -> Vec<f64> {
        rng.gauss_vector(self.dy())
    }

    fn location(self, y: &[f64]) -> f64 {
        match self {
            Self::M1 => y[0] * y[0] + libm::exp(y[1] + 0.25 * y[2]) + libm::cos(y[3] + y[4]),
            Self::M2 => y[0] * y[0] + libm::exp(y[1] + 0.25 * y[2]) + y[3] - y[4],
            Self::M3 => 0.0,
        }
    }

    pub fn conditional_mean(self, y: &[f64]) -> f64 {
        self.location(y)
    }

    pub fn conditional_std(self, y: &[f64]) -> f64 {
        match self {
            Self::M1 => 1.0,
            Self::M2 => 0.5 + 0.5 * y[1] * y[1] + 0.5 * y[4] * y[4],
            Self::M3 => libm::sqrt(y[0] * y[0] + M3_SD * M3_SD),
        }
    }

    /// One draw of `X | Y = y`.
    pub fn draw_response(self, y: &[f64], rng: &mut RngStream) -> f64 {
        match self {
            Self::M1 | Self::M2 => self.location(y) + self.conditional_std(y) * rng.gauss(),
            Self::M3 => {
                let sign = if rng.uniform() <= 0.5 { -1.0 } else { 1.0 };
                sign * y[0] + M3_SD * rng.gauss()
            }
        }
    }

    /// `X | Y = y` for M3 as a two-component Gaussian mixture.
    pub fn m3_conditional(y: f64) -> AtomMixture {
        let v = M3_SD * M3_SD;
        AtomMixture::new(&[Atom::gaussian(vec![-y], 0.5, v), Atom::gaussian(vec![y], 0.5, v)]).expect("valid mixture")
    }
}

/// `n` draws `(X, Y)` of `model`, deterministic in `seed`.
pub fn gen_regression(model: RegressionModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let dy = model.dy();
    let mut rng = RngStream::new(seed, 0x3e9_0001);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n * dy);
    for _ in 0..n {
        let y = model.draw_condition(&mut rng);
        xs.push(model.draw_response(&y, &mut rng));
        ys.extend_from_slice(&y);
    }
    Dataset::new(DataSpec::new(1, dy)?, Matrix::from_vec(n, 1, xs)?, Matrix::from_vec(n, dy, ys)?)
}

/// Per-coordinate min-max maps to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRecord {
    pub x: Option<Vec<(f64, f64)>>,
    pub y: Option<Vec<(f64, f64)>>,
}

fn column_ranges(m: &Matrix, what: &'static str) -> Result<Vec<(f64, f64)>> {
    (0..m.cols())
        .map(|j| {
            let (lo, hi) = m
                .iter_rows()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
            if hi > lo {
                Ok((lo, hi))
            } else {
                Err(Error::InvalidArgument(alloc::format!("{what} column {j} is constant; cannot scale")))
            }
        })
        .collect()
}

fn map_columns(m: &mut Matrix, ranges: &[(f64, f64)], f: impl Fn(f64, f64, f64) -> f64) {
    let cols = m.cols();
    for r in m.as_mut_slice().chunks_exact_mut(cols.max(1)) {
        for (v, &(lo, hi)) in r.iter_mut().zip(ranges) {
            *v = f(*v, lo, hi);
        }
    }
}

impl ScalingRecord {
    pub fn identity() -> Self {
        Self { x: None, y: None }
    }

    pub fn fit(dataset: &Dataset, scale_x: bool, scale_y: bool) -> Result<Self> {
        Ok(Self {
            x: if scale_x { Some(column_ranges(&dataset.xs, "x")?) } else { None },
            y: if scale_y && dataset.spec.dy > 0 {
                Some(column_ranges(&dataset.ys, "y")?)
            } else {
                None
            },
        })
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut xs = dataset.xs.clone();
        let mut ys = dataset.ys.clone();
        let mut spec = dataset.spec.clone();
        if let Some(r) = &self.x {
            map_columns(&mut xs, r, |v, lo, hi| (v - lo) / (hi - lo));
            spec.x_bounds = Some(vec![(0.0, 1.0); spec.dx]);
        }
        if let Some(r) = &self.y {
            map_columns(&mut ys, r, |v, lo, hi| (v - lo) / (hi - lo));
            spec.y_bounds = Some(vec![(0.0, 1.0); spec.dy]);
        }
        Dataset::new(spec, xs, ys)
    }

    pub fn apply_y(&self, y: &mut [f64]) {
        if let Some(r) = &self.y {
            for (v, &(lo, hi)) in y.iter_mut().zip(r) {
                *v = (*v - lo) / (hi - lo);
            }
        }
    }

    /// Maps scaled `X` rows back to original units.
    pub fn invert_x(&self, xs: &mut Matrix) {
        if let Some(r) = &self.x {
            map_columns(xs, r, |v, lo, hi| lo + v * (hi - lo));
        }
    }

    pub fn invert_y(&self, ys: &mut Matrix) {
        if let Some(r) = &self.y {
            map_columns(ys, r, |v, lo, hi| lo + v * (hi - lo));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Shape::ALL {
            assert_eq!(Shape::from_name(s.name()).unwrap(), s);
        }
        assert!(matches!(Shape::from_name("spiral"), Err(Error::UnknownName { .. })));
        assert_eq!(RegressionModel::from_name("M3").unwrap(), RegressionModel::M3);
        assert!(RegressionModel::from_name("m4").is_err());
    }

    #[test]
    fn shapes_are_seeded() {
        for s in Shape::ALL {
            assert_eq!(gen_shape(s, 100, 4).unwrap(), gen_shape(s, 100, 4).unwrap());
            assert_ne!(gen_shape(s, 100, 4).unwrap(), gen_shape(s, 100, 5).unwrap());
        }
    }

    #[test]
    fn rings_concentrate_on_radii() {
        let d = gen_shape(Shape::Rings, 100_000, 1).unwrap();
        let near = (0..d.n())
            .filter(|&i| {
                let r = libm::hypot(d.x(i)[0], d.y(i)[0]);
                RING_RADII.iter().any(|&q| (r - q).abs() <= 0.1)
            })
            .count();
        assert!(near as f64 >= 0.99 * d.n() as f64);
    }

    #[test]
    fn checkerboard_cells_alternate() {
        let d = gen_shape(Shape::Checkerboard, 20_000, 2).unwrap();
        for i in 0..d.n() {
            let c = libm::floor(d.x(i)[0] + 2.0) as i64;
            let r = libm::floor(d.y(i)[0] + 2.0) as i64;
            assert_eq!(c.rem_euclid(2), r.rem_euclid(2));
            assert!((0..4).contains(&r));
        }
    }

    #[test]
    fn slice_densities_integrate_to_one() {
        for (s, y) in [
            (Shape::FourSquares, 1.2),
            (Shape::Checkerboard, -0.3),
            (Shape::Rings, 0.7),
            (Shape::SwissRoll, 0.2),
        ] {
            let d = s.slice_density(y).unwrap();
            let (lo, hi) = d.support();
            let n = 20001;
            let h = (hi - lo) / (n - 1) as f64;
            let total: f64 = (0..n).map(|i| d.density(lo + i as f64 * h)).sum::<f64>() * h;
            assert!((total - 1.0).abs() < 2e-3, "{} {total}", s.name());
        }
        assert!(Shape::Pinwheel.slice_density(0.0).is_none());
    }

    #[test]
    fn regression_truths() {
        assert_eq!(RegressionModel::M3.conditional_mean(&[0.7]), 0.0);
        assert!((RegressionModel::M3.conditional_std(&[1.0]) - libm::sqrt(1.0625)).abs() < 1e-15);
        assert!((RegressionModel::M1.conditional_mean(&[0.0; 5]) - 2.0).abs() < 1e-15);
        let d = gen_regression(RegressionModel::M1, 10, 0).unwrap();
        assert_eq!((d.spec.dx, d.spec.dy), (1, 5));
    }

    #[test]
    fn m3_mixture_matches_moments() {
        let m = RegressionModel::m3_conditional(1.0);
        assert_eq!(m.mean(), vec![0.0]);
        let mut rng = RngStream::new(9, 9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = [0.0];
                m.sample_into(&mut rng, &mut x);
                x[0]
            })
            .collect();
        let sd = crate::linalg::sample_std(&draws);
        assert!((sd - libm::sqrt(1.0625)).abs() < 0.01);
    }

    #[test]
    fn scaling_round_trip() {
        let spec = DataSpec::new(1, 1).unwrap();
        let d = Dataset::new(
            spec,
            Matrix::from_vec(3, 1, vec![0.0, 5.0, 10.0]).unwrap(),
            Matrix::from_vec(3, 1, vec![-1.0, 0.3, 2.0]).unwrap(),
        )
        .unwrap();
        let rec = ScalingRecord::fit(&d, true, true).unwrap();
        let s = rec.apply(&d).unwrap();
        assert_eq!(s.xs.as_slice(), &[0.0, 0.5, 1.0]);
        let mut xs = s.xs.clone();
        rec.invert_x(&mut xs);
        let mut ys = s.ys.clone();
        rec.invert_y(&mut ys);
        for (a, b) in xs.as_slice().iter().zip(d.xs.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in ys.as_slice().iter().zip(d.ys.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
