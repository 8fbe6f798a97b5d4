//! Empirical Lipschitz probes for the γ₁ (in x), γ₂ (in y) and γ₃ (in t)
//! constraints. These are reported, never enforced: ratios are
//! `|v(a) − v(b)|_∞ / |a − b|₂` over random pairs differing in one block.

use super::Mlp;
use crate::rng::RngStream;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LipschitzBounds {
    pub gamma_x: Option<f64>,
    pub gamma_y: Option<f64>,
    pub gamma_t: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LipschitzReport {
    pub ratio_x: f64,
    pub ratio_y: f64,
    pub ratio_t: f64,
    pub probes: usize,
}

impl LipschitzReport {
    /// Per-block `(observed ≤ bound)` flags; `None` where no bound is configured.
    pub fn within(&self, bounds: &LipschitzBounds) -> [Option<bool>; 3] {
        [
            bounds.gamma_x.map(|g| self.ratio_x <= g),
            bounds.gamma_y.map(|g| self.ratio_y <= g),
            bounds.gamma_t.map(|g| self.ratio_t <= g),
        ]
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d > m {
            d
        } else {
            m
        }
    })
}

/// Probes `probes` random pairs per block with x ~ N(0, 4I), y uniform in
/// `y_box` (or N(0, I) when absent) and t ~ U(0, stop_time).
pub fn probe(mlp: &Mlp, rng: &mut RngStream, probes: usize, stop_time: f64, y_box: Option<&[(f64, f64)]>) -> LipschitzReport {
    let cfg = mlp.config();
    let (dx, dy) = (cfg.dx, cfg.dy);
    let mut report = LipschitzReport {
        probes,
        ..Default::default()
    };
    let draw_y = |rng: &mut RngStream| -> Vec<f64> {
        match y_box {
            Some(b) => b.iter().map(|&(lo, hi)| rng.uniform_range(lo, hi)).collect(),
            None => rng.gauss_vector(dy),
        }
    };
    let draw_x = |rng: &mut RngStream| -> Vec<f64> { rng.gauss_vector(dx).into_iter().map(|v| 2.0 * v).collect() };
    for _ in 0..probes {
        let x1 = draw_x(rng);
        let x2 = draw_x(rng);
        let y = draw_y(rng);
        let t = rng.uniform() * stop_time;
        let (a, b) = (mlp.forward(&x1, &y, t), mlp.forward(&x2, &y, t));
        if let (Ok(a), Ok(b)) = (a, b) {
            let r = sup_diff(&a, &b) / crate::linalg::dist2(&x1, &x2);
            report.ratio_x = report.ratio_x.max(r);
        }

        if dy > 0 {
            let y2 = draw_y(rng);
            let d = crate::linalg::dist2(&y, &y2);
            if d > 0.0 {
                if let (Ok(a), Ok(b)) = (mlp.forward(&x1, &y, t), mlp.forward(&x1, &y2, t)) {
                    report.ratio_y = report.ratio_y.max(sup_diff(&a, &b) / d);
                }
            }
        }

        let t2 = rng.uniform() * stop_time;
        if t2 != t {
            if let (Ok(a), Ok(b)) = (mlp.forward(&x1, &y, t), mlp.forward(&x1, &y, t2)) {
                report.ratio_t = report.ratio_t.max(sup_diff(&a, &b) / (t - t2).abs());
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpConfig;
    use alloc::vec;

    #[test]
    fn linear_network_ratios_are_exact_bounds() {
        // v = 2x + 0.5 y + 3 t on scalars
        let cfg = MlpConfig::velocity(1, 1).with_hidden(vec![]);
        let mlp = Mlp::from_params(cfg, vec![2.0, 0.5, 3.0, 0.0]).unwrap();
        let rep = probe(&mlp, &mut RngStream::new(0, 0), 200, 0.9, None);
        assert!((rep.ratio_x - 2.0).abs() < 1e-9);
        assert!((rep.ratio_y - 0.5).abs() < 1e-9);
        assert!((rep.ratio_t - 3.0).abs() < 1e-9);
        let bounds = LipschitzBounds {
            gamma_x: Some(2.5),
            gamma_y: Some(0.1),
            gamma_t: None,
        };
        assert_eq!(rep.within(&bounds), [Some(true), Some(false), None]);
    }
}
