use crate::error::{Error, Result};

const LENTZ_TOL: f64 = 1e-12;
const LENTZ_TINY: f64 = 1e-300;
const LENTZ_MAX_ITER: usize = 10_000;

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < LENTZ_TINY {
        d = LENTZ_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=LENTZ_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < LENTZ_TINY {
            d = LENTZ_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < LENTZ_TINY {
            c = LENTZ_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < LENTZ_TINY {
            d = LENTZ_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < LENTZ_TINY {
            c = LENTZ_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < LENTZ_TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_fraction(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(df: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF by bracketing and bisection on [`t_cdf`], to 1e-10 or
/// floating-point resolution.
pub fn t_quantile(df: u32, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("t quantile needs df ≥ 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return t_quantile(df, 1.0 - p).map(|q| -q);
    }
    let nu = df as f64;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while t_cdf(nu, hi) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if t_cdf(nu, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(t_quantile(7, 0.5).unwrap(), 0.0);
        assert!((t_quantile(1, 0.75).unwrap() - 1.0).abs() < 1e-8);
        // high-precision inversion of the t(199) CDF
        assert!((t_quantile(199, 0.975).unwrap() - 1.971_956_544_251_753_8).abs() < 1e-8);
        assert!(t_quantile(3, 0.0).is_err());
        assert!(t_quantile(3, 1.0).is_err());
        assert!(t_quantile(0, 0.3).is_err());
    }

    #[test]
    fn cdf_examples() {
        // Cauchy: F(t) = 1/2 + atan(t)/π
        for &t in &[-3.0, -0.4, 0.2, 5.0] {
            let exact = 0.5 + libm::atan(t) / core::f64::consts::PI;
            assert!((t_cdf(1.0, t) - exact).abs() < 1e-12);
        }
        // df = 2: F(t) = 1/2 + t / (2√(2 + t²))
        for &t in &[-1.5, 0.7, 4.0] {
            let exact = 0.5 + t / (2.0 * libm::sqrt(2.0 + t * t));
            assert!((t_cdf(2.0, t) - exact).abs() < 1e-12);
        }
    }
}
