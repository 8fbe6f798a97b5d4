use alloc::vec::Vec;

use super::Kde1D;
use crate::error::{Error, Result};

/// Grid size used when comparing a KDE against a reference density.
pub const TV_GRID_POINTS: usize = 2048;

/// `½∫|p − q|` by the trapezoid rule on `points` equally spaced nodes.
pub fn tv_distance(p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(alloc::format!("TV grid needs lo < hi, got [{lo}, {hi}]")));
    }
    if points < 16 {
        return Err(Error::InvalidArgument(alloc::format!("TV grid needs ≥ 16 points, got {points}")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let mut s = 0.0;
    for i in 0..points {
        let x = lo + i as f64 * step;
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        s += w * (p(x) - q(x)).abs();
    }
    Ok(0.5 * s * step)
}

/// KDE of `samples` against `reference`, on `[min − 3h, max + 3h]` widened to
/// cover `support`, with [`TV_GRID_POINTS`] nodes.
pub fn tv_to_reference(samples: &[f64], reference: impl Fn(f64) -> f64, support: (f64, f64)) -> Result<f64> {
    let kde = Kde1D::fit(samples)?;
    let h = kde.bandwidth();
    let lo = (kde.min() - 3.0 * h).min(support.0);
    let hi = (kde.max() + 3.0 * h).max(support.1);
    tv_distance(|x| kde.density(x), reference, lo, hi, TV_GRID_POINTS)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample 1-D Wasserstein-2 via the sorted coupling.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("W2 samples"));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "W2 sample sizes",
            expected: a.len(),
            got: b.len(),
        });
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let sq: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(sq / a.len() as f64))
}

/// W2 between the empirical law of `a` and a law with quantile function
/// `q`, coupling `a_(i)` with `q((i − 0.5)/n)`.
pub fn w2_vs_quantile(a: &[f64], mut q: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("W2 samples"));
    }
    let n = a.len() as f64;
    let mut sq = 0.0;
    for (i, x) in sorted(a).iter().enumerate() {
        let d = x - q((i as f64 + 0.5) / n)?;
        sq += d * d;
    }
    Ok(libm::sqrt(sq / n))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS samples"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `(MSE₁, MSE₂)` of estimated `(mean, std)` pairs against the truths.
pub fn moment_mse(estimates: &[(f64, f64)], truths: &[(f64, f64)]) -> Result<(f64, f64)> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            what: "moment lists",
            expected: truths.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::Empty("moment lists"));
    }
    let n = estimates.len() as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (e, t) in estimates.iter().zip(truths) {
        m1 += (e.0 - t.0) * (e.0 - t.0);
        m2 += (e.1 - t.1) * (e.1 - t.1);
    }
    Ok((m1 / n, m2 / n))
}
