//! Closed-form velocity fields for targets that are finite mixtures.
//!
//! Each condition `y` resolves to a mixture of atoms `(u_k, w_k, s_k²)`: a
//! point mass at `u_k` when `s_k² = 0`, otherwise `N(u_k, s_k² I)`. For such a
//! target the interpolant `W_t = tX + √(1−t²)W` is the Gaussian mixture
//!
//! ```text
//! f_t(x | y) = Σ_k w_k N(x; t u_k, D_k I),   D_k = t² s_k² + 1 − t²,
//! ```
//!
//! and with posterior component weights `π_k(x, t) ∝ w_k N(x; t u_k, D_k I)`
//!
//! ```text
//! E[X | W_t = x]  = Σ_k π_k (u_k + t s_k² / D_k · (x − t u_k))
//! v_F(x, y, t)    = Σ_k π_k (u_k + t (s_k² − 1) / D_k · (x − t u_k))
//! ∇ log f_t(x|y)  = −Σ_k π_k (x − t u_k) / D_k
//! ```
//!
//! For point atoms `v_F = (E[X | W_t = x] − t x) / (1 − t²)`. All mixture
//! weights are computed in log space with max subtraction.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngStream;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: f64,
    /// Isotropic variance; `0` is a point mass.
    pub variance: f64,
}

impl Atom {
    pub fn point(location: Vec<f64>, weight: f64) -> Self {
        Self {
            location,
            weight,
            variance: 0.0,
        }
    }

    pub fn gaussian(location: Vec<f64>, weight: f64, variance: f64) -> Self {
        Self {
            location,
            weight,
            variance,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomMixture {
    dx: usize,
    locations: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    variances: Vec<f64>,
    /// Every atom has the same variance, so `log D` cancels from `π`.
    shared_variance: bool,
}

impl AtomMixture {
    pub fn new(atoms: &[Atom]) -> Result<Self> {
        let first = atoms.first().ok_or(Error::Empty("atom list"))?;
        let dx = first.location.len();
        if dx == 0 {
            return Err(Error::InvalidArgument("atoms must have dimension ≥ 1".into()));
        }
        let mut locations = Vec::with_capacity(atoms.len() * dx);
        for a in atoms {
            if a.location.len() != dx {
                return Err(Error::DimensionMismatch {
                    what: "atom location",
                    expected: dx,
                    got: a.location.len(),
                });
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!("atom weight must be positive, got {}", a.weight)));
            }
            if !(a.variance >= 0.0) || !a.variance.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!("atom variance must be ≥ 0, got {}", a.variance)));
            }
            locations.extend_from_slice(&a.location);
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(alloc::format!("atom weights sum to {total}, expected 1")));
        }
        let weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
        Ok(Self {
            dx,
            locations,
            log_weights: weights.iter().map(|w| libm::log(*w)).collect(),
            weights,
            variances: atoms.iter().map(|a| a.variance).collect(),
            shared_variance: atoms.iter().all(|a| a.variance == first.variance),
        })
    }

    /// Equal-weight point masses at the given locations.
    pub fn uniform_points<R: AsRef<[f64]>>(points: &[R]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let atoms: Vec<Atom> = points.iter().map(|p| Atom::point(p.as_ref().to_vec(), w)).collect();
        // renormalise exactly: 1/n summed n times may miss 1 by an ulp or two
        Self::new(&atoms)
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn location(&self, k: usize) -> &[f64] {
        &self.locations[k * self.dx..(k + 1) * self.dx]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.variances[k]
    }

    pub fn is_discrete(&self) -> bool {
        self.variances.iter().all(|&v| v == 0.0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dx];
        for k in 0..self.len() {
            crate::linalg::axpy(self.weights[k], self.location(k), &mut m);
        }
        m
    }

    fn spread(&self, k: usize, t: f64) -> f64 {
        t * t * self.variances[k] + 1.0 - t * t
    }

    /// Posterior component weights `π_k(x, t)` into `out`; returns
    /// `log f_t(x)` when `want_log`, otherwise NaN.
    fn responsibilities(&self, x: &[f64], t: f64, out: &mut [f64], want_log: bool) -> f64 {
        let half_d = self.dx as f64 / 2.0;
        let mut max = f64::NEG_INFINITY;
        for (k, o) in out.iter_mut().enumerate() {
            let d = self.spread(k, t);
            let sq: f64 = x.iter().zip(self.location(k)).map(|(xi, ui)| (xi - t * ui) * (xi - t * ui)).sum();
            *o = self.log_weights[k] - sq / (2.0 * d);
            if !self.shared_variance {
                *o -= half_d * libm::log(d);
            }
            if *o > max {
                max = *o;
            }
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = libm::exp(*o - max);
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        if !want_log {
            return f64::NAN;
        }
        let shared = if self.shared_variance { half_d * libm::log(self.spread(0, t)) } else { 0.0 };
        max + libm::log(total) - shared - half_d * libm::log(2.0 * PI)
    }

    /// Calls `f(π, log f_t(x))`, keeping `π` on the stack for small mixtures.
    fn with_responsibilities<R>(&self, x: &[f64], t: f64, want_log: bool, f: impl FnOnce(&[f64], f64) -> R) -> R {
        const STACK: usize = 16;
        if self.len() <= STACK {
            let mut buf = [0.0; STACK];
            let r = &mut buf[..self.len()];
            let log_f = self.responsibilities(x, t, r, want_log);
            f(r, log_f)
        } else {
            let mut r = vec![0.0; self.len()];
            let log_f = self.responsibilities(x, t, &mut r, want_log);
            f(&r, log_f)
        }
    }

    pub fn log_density_t(&self, x: &[f64], t: f64) -> f64 {
        self.with_responsibilities(x, t, true, |_, log_f| log_f)
    }

    fn weighted_sum(&self, x: &[f64], t: f64, coeff: impl Fn(f64, f64) -> f64, out: &mut [f64]) {
        self.with_responsibilities(x, t, false, |r, _| self.accumulate(r, x, t, coeff, out))
    }

    fn accumulate(&self, r: &[f64], x: &[f64], t: f64, coeff: impl Fn(f64, f64) -> f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &pk) in r.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            let c = coeff(self.variances[k], self.spread(k, t));
            for ((o, &u), &xi) in out.iter_mut().zip(self.location(k)).zip(x) {
                *o += pk * (u + c * (xi - t * u));
            }
        }
    }

    pub fn posterior_mean_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.weighted_sum(x, t, |s2, d| t * s2 / d, out);
    }

    pub fn velocity_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.weighted_sum(x, t, |s2, d| t * (s2 - 1.0) / d, out);
    }

    pub fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.with_responsibilities(x, t, false, |r, _| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for (k, &pk) in r.iter().enumerate() {
                let d = self.spread(k, t);
                for ((o, &u), &xi) in out.iter_mut().zip(self.location(k)).zip(x) {
                    *o -= pk * (xi - t * u) / d;
                }
            }
        })
    }

    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut k = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let sd = libm::sqrt(self.variances[k]);
        for (o, &loc) in out.iter_mut().zip(self.location(k)) {
            *o = loc + if sd > 0.0 { sd * rng.gauss() } else { 0.0 };
        }
    }

    /// CDF of the 1-D law `Σ w_k N(t u_k, D_k)`; `t = 1` gives the target itself.
    fn cdf_1d(&self, q: f64, t: f64) -> f64 {
        (0..self.len())
            .map(|k| {
                let d = self.spread(k, t);
                let m = t * self.locations[k];
                let c = if d == 0.0 {
                    if q >= m {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf((q - m) / libm::sqrt(d))
                };
                self.weights[k] * c
            })
            .sum()
    }

    fn bisect_cdf(&self, p: f64, t: f64) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..self.len() {
            let sd = libm::sqrt(self.spread(k, t));
            let m = t * self.locations[k];
            lo = lo.min(m - 40.0 * sd - 1.0);
            hi = hi.max(m + 40.0 * sd + 1.0);
        }
        while hi - lo > 1e-11 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_1d(mid, t) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `p`-quantile of the 1-D mixture itself.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        self.require_1d()?;
        if self.is_discrete() {
            let mut order: Vec<usize> = (0..self.len()).collect();
            order.sort_by(|&a, &b| self.locations[a].total_cmp(&self.locations[b]));
            let mut acc = 0.0;
            for &k in &order {
                acc += self.weights[k];
                if acc >= p - 1e-15 {
                    return Ok(self.locations[k]);
                }
            }
            return Ok(self.locations[*order.last().unwrap()]);
        }
        Ok(self.bisect_cdf(p, 1.0))
    }

    /// `p`-quantile of `f_t` (bisection, 1e-10).
    pub fn interpolant_quantile(&self, p: f64, t: f64) -> Result<f64> {
        check_p(p)?;
        check_t(t)?;
        self.require_1d()?;
        Ok(self.bisect_cdf(p, t))
    }

    fn require_1d(&self) -> Result<()> {
        if self.dx != 1 {
            return Err(Error::DimensionMismatch {
                what: "quantile target (must be 1-D)",
                expected: 1,
                got: self.dx,
            });
        }
        Ok(())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange { t, range: "[0, 1)" })
    }
}

/// A conditional law given as one atom mixture per condition key. A query
/// `y` resolves to the mixture with the nearest key (ℓ²); with `dy = 0`
/// there is exactly one mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteConditionalTarget {
    dx: usize,
    dy: usize,
    conditions: Vec<(Vec<f64>, AtomMixture)>,
}

impl DiscreteConditionalTarget {
    pub fn unconditional(mixture: AtomMixture) -> Self {
        Self {
            dx: mixture.dx(),
            dy: 0,
            conditions: vec![(Vec::new(), mixture)],
        }
    }

    pub fn new(dy: usize, conditions: Vec<(Vec<f64>, AtomMixture)>) -> Result<Self> {
        let dx = conditions.first().ok_or(Error::Empty("condition table"))?.1.dx();
        for (key, m) in &conditions {
            if key.len() != dy {
                return Err(Error::DimensionMismatch {
                    what: "condition key",
                    expected: dy,
                    got: key.len(),
                });
            }
            if m.dx() != dx {
                return Err(Error::DimensionMismatch {
                    what: "mixture dimension",
                    expected: dx,
                    got: m.dx(),
                });
            }
        }
        Ok(Self { dx, dy, conditions })
    }

    /// Single point mass at `u`.
    pub fn point_mass(u: &[f64]) -> Self {
        Self::unconditional(AtomMixture::new(&[Atom::point(u.to_vec(), 1.0)]).expect("valid point mass"))
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn dy(&self) -> usize {
        self.dy
    }

    pub fn conditions(&self) -> &[(Vec<f64>, AtomMixture)] {
        &self.conditions
    }

    pub fn mixture(&self, y: &[f64]) -> &AtomMixture {
        if self.conditions.len() == 1 {
            return &self.conditions[0].1;
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, (key, _)) in self.conditions.iter().enumerate() {
            let d: f64 = key.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        &self.conditions[best].1
    }

    fn check(&self, x: &[f64], y: &[f64], t: f64) -> Result<()> {
        if x.len() != self.dx {
            return Err(Error::DimensionMismatch {
                what: "oracle x",
                expected: self.dx,
                got: x.len(),
            });
        }
        if y.len() != self.dy {
            return Err(Error::DimensionMismatch {
                what: "oracle y",
                expected: self.dy,
                got: y.len(),
            });
        }
        check_t(t)
    }

    /// `E[X | W_t = x, Y = y]`.
    pub fn posterior_mean(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, y, t)?;
        let mut out = vec![0.0; self.dx];
        self.mixture(y).posterior_mean_into(x, t, &mut out);
        Ok(out)
    }

    /// The conditional Föllmer velocity `v_F(x, y, t)`; `E[X | Y = y]` at `t = 0`.
    pub fn oracle_velocity(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, y, t)?;
        let mut out = vec![0.0; self.dx];
        self.mixture(y).velocity_into(x, t, &mut out);
        Ok(out)
    }

    pub fn interpolant_density(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        self.check(x, y, t)?;
        Ok(libm::exp(self.mixture(y).log_density_t(x, t)))
    }

    /// `∇_x log f_t(x | y)` in closed form.
    pub fn score(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, y, t)?;
        let mut out = vec![0.0; self.dx];
        self.mixture(y).score_into(x, t, &mut out);
        Ok(out)
    }

    pub fn conditional_mean(&self, y: &[f64]) -> Vec<f64> {
        self.mixture(y).mean()
    }

    pub fn exact_quantile(&self, y: &[f64], p: f64) -> Result<f64> {
        self.mixture(y).quantile(p)
    }

    pub fn interpolant_quantile(&self, y: &[f64], t: f64, p: f64) -> Result<f64> {
        self.mixture(y).interpolant_quantile(p, t)
    }

    pub fn sample(&self, y: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dx];
        self.mixture(y).sample_into(rng, &mut out);
        out
    }
}

/// `s = t·v − x`, the score implied by a velocity value. Undefined at `t = 0`.
pub fn score_from_velocity(x: &[f64], t: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::TimeOutOfRange { t, range: "(0, 1)" });
    }
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "velocity",
            expected: x.len(),
            got: v.len(),
        });
    }
    Ok(x.iter().zip(v).map(|(xi, vi)| t * vi - xi).collect())
}

/// Exact flow map of a point mass at `u`: `F_t(z) = t·u + √(1−t²)·z`.
pub fn point_mass_flow_map(u: &[f64], z: &[f64], t: f64) -> Vec<f64> {
    let s = libm::sqrt(1.0 - t * t);
    u.iter().zip(z).map(|(ui, zi)| t * ui + s * zi).collect()
}

/// Worst-case results of [`self_check`] over random probes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleCheck {
    pub probes: usize,
    /// Max relative error between `v_F` and `(x + s)/t` with `s` from
    /// central differences of `log f_t`.
    pub score_rel_err: f64,
    /// Max `|v_F(x, y, t₀) − E[X | Y = y]|_∞` at `t₀ = 10⁻⁶`.
    pub t0_err: f64,
    /// Largest finite-difference Lipschitz ratio of `v_F` in `x`.
    pub lipschitz_ratio: f64,
    /// `dx / (1 − T)²`.
    pub lipschitz_bound: f64,
    /// Max `|v_F|_∞ / ((1 + t R) / (1 − t²))` over probes with `|x|_∞ ≤ R`;
    /// `None` unless every atom is a point in `[−1, 1]^dx`.
    pub bound_ratio: Option<f64>,
}

impl OracleCheck {
    pub fn passes(&self, rel_tol: f64, t0_tol: f64) -> bool {
        self.score_rel_err <= rel_tol
            && self.t0_err <= t0_tol
            && self.lipschitz_ratio <= self.lipschitz_bound + 1e-6
            && self.bound_ratio.is_none_or(|r| r <= 1.0 + 1e-9)
    }
}

const CHECK_T0: f64 = 1e-6;
const CHECK_RADIUS: f64 = 3.0;

/// Probes the closed-form field against its defining identities: the
/// score relation (t ∈ [0.05, 0.95]), the `t → 0` limit, the Lipschitz
/// bound in `x` for `t ≤ stop_time`, and the sup-norm bound. Conditions are
/// drawn from the target's keys.
pub fn self_check(target: &DiscreteConditionalTarget, probes: usize, stop_time: f64, rng: &mut RngStream) -> Result<OracleCheck> {
    check_t(stop_time)?;
    if probes == 0 {
        return Err(Error::Empty("oracle probes"));
    }
    let dx = target.dx();
    let h = 1e-5;
    let bounded = target.conditions().iter().all(|(_, m)| {
        m.is_discrete() && (0..m.len()).all(|k| m.location(k).iter().all(|u| u.abs() <= 1.0))
    });
    let mut out = OracleCheck {
        probes,
        score_rel_err: 0.0,
        t0_err: 0.0,
        lipschitz_ratio: 0.0,
        lipschitz_bound: dx as f64 / ((1.0 - stop_time) * (1.0 - stop_time)),
        bound_ratio: if bounded { Some(0.0) } else { None },
    };
    let draw_x = |rng: &mut RngStream| -> Vec<f64> { (0..dx).map(|_| rng.uniform_range(-CHECK_RADIUS, CHECK_RADIUS)).collect() };
    for _ in 0..probes {
        let (y, m) = {
            let c = &target.conditions()[rng.below(target.conditions().len())];
            (c.0.clone(), &c.1)
        };
        let mut v = vec![0.0; dx];

        let t = rng.uniform_range(0.05, 0.95);
        let x = draw_x(rng);
        m.velocity_into(&x, t, &mut v);
        let mut xp = x.clone();
        for j in 0..dx {
            xp[j] = x[j] + h;
            let up = m.log_density_t(&xp, t);
            xp[j] = x[j] - h;
            let dn = m.log_density_t(&xp, t);
            xp[j] = x[j];
            let s = (up - dn) / (2.0 * h);
            let implied = (x[j] + s) / t;
            let err = (v[j] - implied).abs() / v[j].abs().max(1.0);
            out.score_rel_err = out.score_rel_err.max(err);
        }

        let x = draw_x(rng);
        m.velocity_into(&x, CHECK_T0, &mut v);
        let mean = target.conditional_mean(&y);
        out.t0_err = out.t0_err.max(crate::linalg::dist_inf(&v, &mean));

        let t = rng.uniform() * stop_time;
        let a = draw_x(rng);
        let b: Vec<f64> = if rng.uniform() < 0.5 {
            draw_x(rng)
        } else {
            a.iter().map(|ai| ai + 1e-3 * rng.gauss()).collect()
        };
        let d = crate::linalg::dist2(&a, &b);
        if d > 0.0 {
            let mut vb = vec![0.0; dx];
            m.velocity_into(&a, t, &mut v);
            m.velocity_into(&b, t, &mut vb);
            out.lipschitz_ratio = out.lipschitz_ratio.max(crate::linalg::dist_inf(&v, &vb) / d);
            if let Some(r) = out.bound_ratio.as_mut() {
                let bound = (1.0 + t * CHECK_RADIUS) / (1.0 - t * t);
                *r = r.max(crate::linalg::norm_inf(&v) / bound);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms(a: f64, b: f64) -> DiscreteConditionalTarget {
        DiscreteConditionalTarget::unconditional(AtomMixture::uniform_points(&[[a], [b]]).unwrap())
    }

    #[test]
    fn single_atom_posterior_is_the_atom() {
        let o = DiscreteConditionalTarget::point_mass(&[0.4, -1.0]);
        for &(x0, t) in &[(0.0, 0.0), (3.0, 0.5), (-2.0, 0.99)] {
            let pm = o.posterior_mean(&[x0, 1.0], &[], t).unwrap();
            assert!((pm[0] - 0.4).abs() < 1e-15 && (pm[1] + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_atoms_posterior_zero_at_origin() {
        let o = two_atoms(-1.0, 1.0);
        for &t in &[0.0, 0.3, 0.7, 0.999] {
            assert_eq!(o.posterior_mean(&[0.0], &[], t).unwrap()[0], 0.0);
            assert_eq!(o.oracle_velocity(&[0.0], &[], t).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn posterior_mean_high_precision_values() {
        // 50-digit evaluations of the softmax formula
        let o = two_atoms(0.0, 1.0);
        let v = o.posterior_mean(&[0.3], &[], 0.6).unwrap()[0];
        assert!((v - 0.5).abs() < 1e-14);
        let v = o.posterior_mean(&[0.9], &[], 0.6).unwrap()[0];
        assert!((v - 0.637_030_794_480_383_19).abs() < 1e-14);
        let m = AtomMixture::new(&[
            Atom::point(vec![-1.0], 0.2),
            Atom::point(vec![0.5], 0.3),
            Atom::point(vec![2.0], 0.5),
        ])
        .unwrap();
        let o = DiscreteConditionalTarget::unconditional(m);
        let v = o.posterior_mean(&[-0.4], &[], 0.8).unwrap()[0];
        assert!((v + 0.331_499_767_006_519_27).abs() < 1e-14);
        // far tail at t close to 1 stays finite
        let v = two_atoms(-1.0, 1.0).posterior_mean(&[3.0], &[], 0.999).unwrap()[0];
        assert_eq!(v, 1.0);
    }

    #[test]
    fn velocity_examples() {
        let o = DiscreteConditionalTarget::point_mass(&[1.0]);
        let v = o.oracle_velocity(&[0.5], &[], 0.5).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-15);
        let v = two_atoms(0.0, 1.0).oracle_velocity(&[0.37], &[], 0.0).unwrap()[0];
        assert!((v - 0.5).abs() < 1e-15);
        assert!(o.oracle_velocity(&[0.5], &[], 1.0).is_err());
    }

    #[test]
    fn gaussian_atom_with_unit_variance_has_constant_velocity() {
        let m = AtomMixture::new(&[Atom::gaussian(vec![0.5, -0.2], 1.0, 1.0)]).unwrap();
        let o = DiscreteConditionalTarget::unconditional(m);
        for &(x, t) in &[([0.0, 0.0], 0.1), ([3.0, -1.0], 0.6), ([-2.0, 5.0], 0.95)] {
            let v = o.oracle_velocity(&x, &[], t).unwrap();
            assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] + 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn density_examples() {
        let o = DiscreteConditionalTarget::point_mass(&[1.7]);
        let d0 = o.interpolant_density(&[0.3], &[], 0.0).unwrap();
        assert!((d0 - libm::exp(-0.045) / libm::sqrt(2.0 * PI)).abs() < 1e-15);
        let peak = o.interpolant_density(&[0.8 * 1.7], &[], 0.8).unwrap();
        assert!((peak - 0.664_903_800_669_054_48).abs() < 1e-14);

        let o = two_atoms(-1.0, 1.0);
        let (lo, hi, n) = (-8.0, 8.0, 16001);
        let h = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            s += w * o.interpolant_density(&[x], &[], 0.7).unwrap();
        }
        assert!((s * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn score_from_velocity_examples() {
        let u = [1.2];
        let o = DiscreteConditionalTarget::point_mass(&u);
        let t = 0.6;
        let x = [t * u[0]];
        let v = o.oracle_velocity(&x, &[], t).unwrap();
        let s = score_from_velocity(&x, t, &v).unwrap();
        assert!(s[0].abs() < 1e-15);
        let x = [0.3];
        let s = score_from_velocity(&x, t, &o.oracle_velocity(&x, &[], t).unwrap()).unwrap();
        assert!((s[0] + (0.3 - t * 1.2) / (1.0 - t * t)).abs() < 1e-14);
        // v = x / t gives zero score
        let s = score_from_velocity(&[2.0, -1.0], 0.5, &[4.0, -2.0]).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        assert!(score_from_velocity(&[1.0], 0.0, &[1.0]).is_err());
    }

    #[test]
    fn quantile_examples() {
        let o = two_atoms(0.0, 1.0);
        assert_eq!(o.exact_quantile(&[], 0.25).unwrap(), 0.0);
        assert_eq!(o.exact_quantile(&[], 0.75).unwrap(), 1.0);
        let pm = DiscreteConditionalTarget::point_mass(&[2.0]);
        assert!((pm.interpolant_quantile(&[], 0.7, 0.5).unwrap() - 1.4).abs() < 1e-10);
        let sym = two_atoms(-1.0, 1.0);
        assert!(sym.interpolant_quantile(&[], 0.9, 0.5).unwrap().abs() < 1e-10);
        assert!(o.exact_quantile(&[], 0.0).is_err());
        assert!(o.exact_quantile(&[], 1.0).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(AtomMixture::new(&[Atom::point(vec![0.0], 0.5)]).is_err());
        assert!(AtomMixture::new(&[]).is_err());
        assert!(AtomMixture::new(&[Atom::point(vec![0.0], 1.5), Atom::point(vec![1.0], -0.5)]).is_err());
    }

    #[test]
    fn nearest_key_resolution() {
        let a = AtomMixture::uniform_points(&[[-1.0]]).unwrap();
        let b = AtomMixture::uniform_points(&[[1.0]]).unwrap();
        let o = DiscreteConditionalTarget::new(1, vec![(vec![0.0], a), (vec![1.0], b)]).unwrap();
        assert_eq!(o.conditional_mean(&[0.2]), vec![-1.0]);
        assert_eq!(o.conditional_mean(&[0.8]), vec![1.0]);
    }

    #[test]
    fn self_check_passes_on_two_atoms_and_gaussian_atoms() {
        let mut rng = RngStream::new(4, 0);
        let c = self_check(&two_atoms(-1.0, 1.0), 500, 0.99, &mut rng).unwrap();
        assert!(c.passes(1e-4, 1e-4), "{c:?}");
        assert!(c.bound_ratio.is_some());
        let g = AtomMixture::new(&[Atom::gaussian(vec![-0.5], 0.3, 0.2), Atom::gaussian(vec![2.0], 0.7, 0.0)]).unwrap();
        let c = self_check(&DiscreteConditionalTarget::unconditional(g), 500, 0.9, &mut rng).unwrap();
        assert!(c.score_rel_err < 1e-4 && c.t0_err < 1e-4, "{c:?}");
        assert!(c.bound_ratio.is_none());
    }
}
