//! Feed-forward ReLU networks with hand-written backpropagation.
//!
//! Parameters live in one flat buffer. Layer `l` maps `d_l → d_{l+1}` and
//! stores its weight matrix (`d_{l+1} × d_l`, row-major) followed by its bias.
//! Gradients share the layout, which keeps Adam, clamping, finite-difference
//! checks and checkpointing trivial.
//!
//! The class constraints are `sup |v|₂ ≤ K` (enforced in the forward pass by
//! radial rescaling of the output) and `|θ|_∞ ≤ κ` (enforced by clamping after
//! every optimizer step). Lipschitz bounds γ₁..γ₃ are only recorded and probed,
//! see [`lipschitz`].

mod adam;
mod backprop;
pub mod gradcheck;
pub mod lipschitz;

pub use adam::{Adam, AdamConfig};
pub use backprop::Batch;
pub use lipschitz::{LipschitzBounds, LipschitzReport};

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{gemm_abt, Matrix};
use crate::rng::RngStream;

/// How the time coordinate enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeInput {
    /// No time input (one-step generators).
    Absent,
    /// Raw `t`.
    Raw,
    /// Raw `t` followed by `sin(2^j π t), cos(2^j π t)` for `j < count`.
    Fourier(usize),
}

impl TimeInput {
    pub fn width(self) -> usize {
        match self {
            TimeInput::Absent => 0,
            TimeInput::Raw => 1,
            TimeInput::Fourier(k) => 1 + 2 * k,
        }
    }

    /// `0` selects raw `t`.
    pub fn from_feature_count(count: usize) -> Self {
        if count == 0 {
            TimeInput::Raw
        } else {
            TimeInput::Fourier(count)
        }
    }

    pub fn feature_count(self) -> usize {
        match self {
            TimeInput::Fourier(k) => k,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub dx: usize,
    pub dy: usize,
    pub time: TimeInput,
    /// Hidden widths; depth `L` is the length, width `M` the maximum.
    pub hidden: Vec<usize>,
    /// `K`: ℓ² cap on the output. `None` is unbounded.
    pub output_cap: Option<f64>,
    /// `κ`: sup-norm cap on every parameter. `None` is unbounded.
    pub weight_cap: Option<f64>,
    pub lipschitz: LipschitzBounds,
}

pub const DEFAULT_HIDDEN: [usize; 4] = [256, 256, 256, 256];

impl MlpConfig {
    /// Velocity network `(x, y, t) → ℝ^dx` with the default 4×256 trunk.
    pub fn velocity(dx: usize, dy: usize) -> Self {
        Self {
            dx,
            dy,
            time: TimeInput::Raw,
            hidden: DEFAULT_HIDDEN.to_vec(),
            output_cap: None,
            weight_cap: None,
            lipschitz: LipschitzBounds::default(),
        }
    }

    /// One-step generator `(z, y) → ℝ^dx`.
    pub fn generator(dx: usize, dy: usize, hidden: Vec<usize>) -> Self {
        Self {
            time: TimeInput::Absent,
            hidden,
            ..Self::velocity(dx, dy)
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.dx + self.dy + self.time.width()
    }

    pub fn out_dim(&self) -> usize {
        self.dx
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn max_width(&self) -> usize {
        self.hidden.iter().copied().max().unwrap_or(0)
    }

    /// Layer widths `[in, h_1, .., h_L, out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.in_dim());
        w.extend_from_slice(&self.hidden);
        w.push(self.out_dim());
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 {
            return Err(Error::InvalidArgument("network output dimension dx must be ≥ 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be ≥ 1".into()));
        }
        for (name, cap) in [("output cap K", self.output_cap), ("weight cap κ", self.weight_cap)] {
            if let Some(c) = cap {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidArgument(alloc::format!("{name} must be positive, got {c}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
}

fn layout(config: &MlpConfig) -> Vec<Layer> {
    let widths = config.widths();
    let mut off = 0;
    widths
        .windows(2)
        .map(|p| {
            let l = Layer {
                inp: p[0],
                out: p[1],
                w: off,
                b: off + p[0] * p[1],
            };
            off += p[1] * (p[0] + 1);
            l
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(config: MlpConfig, rng: &mut RngStream) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        for l in mlp.layers.clone() {
            let bound = libm::sqrt(6.0 / l.inp as f64);
            for p in &mut mlp.params[l.w..l.b] {
                *p = rng.uniform_range(-bound, bound);
            }
        }
        mlp.clamp_params();
        Ok(mlp)
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = layout(&config);
        let params = vec![0.0; config.num_params()];
        Ok(Self { config, layers, params })
    }

    pub fn from_params(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        if params.len() != mlp.params.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: mlp.params.len(),
                got: params.len(),
            });
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Weight block of layer `l` (`out × in`, row-major) and its bias.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let ly = self.layers[l];
        (&self.params[ly.w..ly.b], &self.params[ly.b..ly.b + ly.out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let ly = self.layers[l];
        let (w, rest) = self.params[ly.w..].split_at_mut(ly.b - ly.w);
        (w, &mut rest[..ly.out])
    }

    pub(crate) fn clamp_params(&mut self) {
        if let Some(k) = self.config.weight_cap {
            for p in &mut self.params {
                *p = p.clamp(-k, k);
            }
        }
    }

    /// Writes the network input for `(x, y, t)` into `dst`.
    pub fn encode_input(&self, x: &[f64], y: &[f64], t: f64, dst: &mut [f64]) {
        let (dx, dy) = (self.config.dx, self.config.dy);
        dst[..dx].copy_from_slice(x);
        dst[dx..dx + dy].copy_from_slice(y);
        let rest = &mut dst[dx + dy..];
        match self.config.time {
            TimeInput::Absent => {}
            TimeInput::Raw => rest[0] = t,
            TimeInput::Fourier(k) => {
                rest[0] = t;
                let mut freq = PI;
                for j in 0..k {
                    rest[1 + 2 * j] = libm::sin(freq * t);
                    rest[2 + 2 * j] = libm::cos(freq * t);
                    freq *= 2.0;
                }
            }
        }
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.config.dx {
            return Err(Error::DimensionMismatch {
                what: "network x input",
                expected: self.config.dx,
                got: x.len(),
            });
        }
        if y.len() != self.config.dy {
            return Err(Error::DimensionMismatch {
                what: "network y input",
                expected: self.config.dy,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// `v_θ(x, y, t)`, with the output cap applied.
    pub fn forward(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dims(x, y)?;
        let mut input = vec![0.0; self.config.in_dim()];
        self.encode_input(x, y, t, &mut input);
        let mut out = vec![0.0; self.config.dx];
        self.predict_encoded(&input, 1, &mut out);
        Ok(out)
    }

    /// Batched forward pass over pre-encoded input rows (`rows × in_dim`).
    /// Writes `rows × dx` capped outputs into `out`.
    pub fn predict_encoded(&self, inputs: &[f64], rows: usize, out: &mut [f64]) {
        let nl = self.layers.len();
        let mut cur: Vec<f64> = Vec::new();
        let mut next: Vec<f64> = Vec::new();
        for (l, ly) in self.layers.iter().enumerate() {
            let src: &[f64] = if l == 0 { inputs } else { &cur };
            let dst: &mut Vec<f64> = &mut next;
            dst.clear();
            dst.resize(rows * ly.out, 0.0);
            let bias = &self.params[ly.b..ly.b + ly.out];
            for r in dst.chunks_exact_mut(ly.out) {
                r.copy_from_slice(bias);
            }
            gemm_abt(rows, ly.inp, ly.out, 1.0, src, &self.params[ly.w..ly.b], 1.0, dst);
            if l + 1 < nl {
                for v in dst.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            core::mem::swap(&mut cur, &mut next);
        }
        out[..rows * self.config.dx].copy_from_slice(&cur);
        if let Some(cap) = self.config.output_cap {
            for row in out[..rows * self.config.dx].chunks_exact_mut(self.config.dx) {
                project_row(row, cap);
            }
        }
    }

    /// Rows of `xs` evaluated at a shared `(y, t)`.
    pub fn forward_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        let (dx, ind) = (self.config.dx, self.config.in_dim());
        let rows = xs.len() / dx;
        let mut inputs = vec![0.0; rows * ind];
        for (x, dst) in xs.chunks_exact(dx).zip(inputs.chunks_exact_mut(ind)) {
            self.encode_input(x, y, t, dst);
        }
        self.predict_encoded(&inputs, rows, out);
    }

    /// Rows of `xs` paired with rows of `ys` (`dy` columns), shared `t`.
    pub fn forward_pairs(&self, xs: &[f64], ys: &[f64], t: f64, out: &mut [f64]) {
        let (dx, dy, ind) = (self.config.dx, self.config.dy, self.config.in_dim());
        let rows = xs.len() / dx;
        let mut inputs = vec![0.0; rows * ind];
        for (i, dst) in inputs.chunks_exact_mut(ind).enumerate() {
            self.encode_input(&xs[i * dx..(i + 1) * dx], &ys[i * dy..(i + 1) * dy], t, dst);
        }
        self.predict_encoded(&inputs, rows, out);
    }

    /// Batched forward over matching rows of `xs`, `ys` and times.
    pub fn forward_batch(&self, xs: &Matrix, ys: &Matrix, ts: &[f64]) -> Result<Matrix> {
        let rows = xs.rows();
        if ys.rows() != rows || ts.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "batch rows",
                expected: rows,
                got: ys.rows().min(ts.len()),
            });
        }
        if rows > 0 {
            self.check_dims(xs.row(0), ys.row(0))?;
        }
        let ind = self.config.in_dim();
        let mut inputs = vec![0.0; rows * ind];
        for (i, dst) in inputs.chunks_exact_mut(ind.max(1)).enumerate().take(rows) {
            self.encode_input(xs.row(i), ys.row(i), ts[i], dst);
        }
        let mut out = Matrix::zeros(rows, self.config.dx);
        self.predict_encoded(&inputs, rows, out.as_mut_slice());
        Ok(out)
    }
}

/// Radial projection onto the ℓ² ball of radius `cap`. Returns the scale used.
pub(crate) fn project_row(row: &mut [f64], cap: f64) -> f64 {
    let r = crate::linalg::norm2(row);
    if r > cap {
        let s = cap / r;
        for v in row.iter_mut() {
            *v *= s;
        }
        s
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let cfg = MlpConfig::velocity(2, 1).with_hidden(vec![8, 8]);
        let mlp = Mlp::zeros(cfg).unwrap();
        assert_eq!(mlp.forward(&[1.0, -2.0], &[0.5], 0.3).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_on_x_block() {
        let cfg = MlpConfig::velocity(2, 1).with_hidden(vec![]);
        let mut mlp = Mlp::zeros(cfg).unwrap();
        {
            let (w, _) = mlp.layer_mut(0);
            // out × in = 2 × 4, identity on the first two inputs
            w[0] = 1.0;
            w[4 + 1] = 1.0;
        }
        let out = mlp.forward(&[0.7, -1.3], &[5.0], 0.9).unwrap();
        assert_eq!(out, vec![0.7, -1.3]);
    }

    #[test]
    fn output_cap_rescales_to_k() {
        let mut cfg = MlpConfig::velocity(2, 0).with_hidden(vec![]);
        cfg.output_cap = Some(3.0);
        let mut mlp = Mlp::zeros(cfg).unwrap();
        {
            let (_, b) = mlp.layer_mut(0);
            // raw output (7.2, 9.6) has norm 12
            b[0] = 7.2;
            b[1] = 9.6;
        }
        let out = mlp.forward(&[0.0, 0.0], &[], 0.1).unwrap();
        let n = crate::linalg::norm2(&out);
        assert!((n - 3.0).abs() < 1e-15, "norm {n}");
        assert!((out[0] / out[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn batch_matches_single() {
        let cfg = MlpConfig::velocity(2, 3).with_hidden(vec![16, 16]);
        let mut rng = RngStream::new(3, 0);
        let mlp = Mlp::new(cfg, &mut rng).unwrap();
        let xs = Matrix::from_rows(2, &[[0.1, 0.2], [-1.0, 2.0], [0.5, 0.5]]).unwrap();
        let ys = Matrix::from_rows(3, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.3]]).unwrap();
        let ts = [0.1, 0.5, 0.9];
        let batch = mlp.forward_batch(&xs, &ys, &ts).unwrap();
        for i in 0..3 {
            let single = mlp.forward(xs.row(i), ys.row(i), ts[i]).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fourier_time_features() {
        let mut cfg = MlpConfig::velocity(1, 0).with_hidden(vec![4]);
        cfg.time = TimeInput::Fourier(2);
        assert_eq!(cfg.in_dim(), 1 + 1 + 4);
        let mlp = Mlp::zeros(cfg).unwrap();
        let mut buf = vec![0.0; 6];
        mlp.encode_input(&[2.0], &[], 0.25, &mut buf);
        assert_eq!(buf[0], 2.0);
        assert_eq!(buf[1], 0.25);
        assert!((buf[2] - (PI * 0.25).sin()).abs() < 1e-15);
        assert!((buf[5] - (2.0 * PI * 0.25).cos()).abs() < 1e-15);
    }

    #[test]
    fn weight_cap_applies_at_init() {
        let mut cfg = MlpConfig::velocity(1, 1).with_hidden(vec![4]);
        cfg.weight_cap = Some(0.05);
        let mlp = Mlp::new(cfg, &mut RngStream::new(0, 0)).unwrap();
        assert!(mlp.params().iter().all(|p| p.abs() <= 0.05));
    }

    #[test]
    fn param_count_matches_layout() {
        let cfg = MlpConfig::velocity(2, 1).with_hidden(vec![5, 3]);
        // (4+1)*5 + (5+1)*3 + (3+1)*2
        assert_eq!(cfg.num_params(), 25 + 18 + 8);
        assert_eq!(Mlp::zeros(cfg).unwrap().params().len(), 51);
    }
}
