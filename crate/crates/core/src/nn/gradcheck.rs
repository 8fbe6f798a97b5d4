//! Central finite differences of the batch loss, for checking backprop.

use alloc::vec::Vec;

use super::backprop::Batch;
use super::{Mlp, MlpConfig, TimeInput};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::RngStream;

/// Step used by [`finite_difference_grad`] in the gradient checks.
pub const FD_STEP: f64 = 1e-6;
/// Gradient magnitudes below this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-5;

/// `(L(θ + h eᵢ) − L(θ − h eᵢ)) / 2h` for every parameter.
pub fn finite_difference_grad(mlp: &Mlp, batch: &Batch, h: f64) -> Result<Vec<f64>> {
    let mut probe = mlp.clone();
    let mut out = Vec::with_capacity(mlp.params().len());
    for i in 0..mlp.params().len() {
        let orig = mlp.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = probe.loss(batch)?;
        probe.params_mut()[i] = orig - h;
        let down = probe.loss(batch)?;
        probe.params_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `max_i |aᵢ − bᵢ| / max(|aᵢ|, |bᵢ|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A random small network and batch: `dx ∈ 1..=3`, `dy ∈ 0..=2`, up to three
/// hidden layers of width ≤ 8, raw or Fourier time input, sometimes an
/// output cap, 1–8 rows with `t < 0.99`.
///
/// Parameters are jittered off their initial values: zero biases behind a
/// dead layer would put pre-activations exactly on the ReLU kink, where
/// central differences see half the slope.
pub fn random_case(rng: &mut RngStream) -> (Mlp, Batch) {
    let dx = 1 + rng.below(3);
    let dy = rng.below(3);
    let depth = rng.below(4);
    let hidden: Vec<usize> = (0..depth).map(|_| 1 + rng.below(8)).collect();
    let mut cfg = MlpConfig::velocity(dx, dy).with_hidden(hidden);
    if rng.below(3) == 1 {
        cfg.time = TimeInput::Fourier(1 + rng.below(3));
    }
    if rng.below(3) == 0 {
        cfg.output_cap = Some(rng.uniform_range(0.2, 2.0));
    }
    let mut mlp = Mlp::new(cfg, rng).expect("valid random config");
    for p in mlp.params_mut() {
        *p += 0.1 * rng.gauss();
    }
    let rows = 1 + rng.below(8);
    let mut g = |r: usize, c: usize| Matrix::from_vec(r, c, rng.gauss_vector(r * c)).expect("shape");
    let x_in = g(rows, dx);
    let y_in = g(rows, dy);
    let target = g(rows, dx);
    let t_in = (0..rows).map(|_| rng.uniform() * 0.99).collect();
    (mlp, Batch { x_in, y_in, t_in, target })
}
