//! Samplers for `dZ = v(Z, y, t) dt` on the grid `t_k = kT/N`.
//!
//! Every sampled row `i` draws from its own stream `rng.substream(i)`, so
//! results do not depend on how rows are chunked or split across workers.
//!
//! The reverse SDE uses the score implied by the velocity, `s = t·v − x`.
//! The forward process `dZ̄ = −Z̄/(1−s) ds + √(2/(1−s)) dB` has marginal
//! `f_{1−s}`; reversing it in `t = 1 − s` gives drift
//! `Z/t + (2/t)(t·v − Z) = 2v − Z/t` and diffusion `√(2/t)`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::data::FlowConfig;
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::nn::Mlp;
use crate::oracle::DiscreteConditionalTarget;
use crate::rng::RngStream;

/// Rows integrated together per batched field evaluation.
pub const CHUNK: usize = 256;

pub trait VelocityField {
    fn dx(&self) -> usize;
    fn dy(&self) -> usize;

    /// Writes `v(x, y, t)` into `out`.
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]);

    /// Rows of `xs` (row-major, `dx` columns) at a shared `(y, t)`.
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        let dx = self.dx();
        for (x, o) in xs.chunks_exact(dx).zip(out.chunks_exact_mut(dx)) {
            self.velocity(x, y, t, o);
        }
    }

    /// Row `i` of `xs` evaluated at condition row `i` of `ys` (`dy` columns).
    fn velocity_pairs(&self, xs: &[f64], ys: &[f64], t: f64, out: &mut [f64]) {
        let (dx, dy) = (self.dx(), self.dy());
        for (i, (x, o)) in xs.chunks_exact(dx).zip(out.chunks_exact_mut(dx)).enumerate() {
            self.velocity(x, &ys[i * dy..(i + 1) * dy], t, o);
        }
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn dx(&self) -> usize {
        (**self).dx()
    }
    fn dy(&self) -> usize {
        (**self).dy()
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        (**self).velocity(x, y, t, out)
    }
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        (**self).velocity_rows(xs, y, t, out)
    }
    fn velocity_pairs(&self, xs: &[f64], ys: &[f64], t: f64, out: &mut [f64]) {
        (**self).velocity_pairs(xs, ys, t, out)
    }
}

impl VelocityField for Mlp {
    fn dx(&self) -> usize {
        self.config().dx
    }
    fn dy(&self) -> usize {
        self.config().dy
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.forward_rows(x, y, t, out)
    }
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.forward_rows(xs, y, t, out)
    }
    fn velocity_pairs(&self, xs: &[f64], ys: &[f64], t: f64, out: &mut [f64]) {
        self.forward_pairs(xs, ys, t, out)
    }
}

impl VelocityField for DiscreteConditionalTarget {
    fn dx(&self) -> usize {
        DiscreteConditionalTarget::dx(self)
    }
    fn dy(&self) -> usize {
        DiscreteConditionalTarget::dy(self)
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.mixture(y).velocity_into(x, t, out)
    }
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        let m = self.mixture(y);
        let dx = m.dx();
        for (x, o) in xs.chunks_exact(dx).zip(out.chunks_exact_mut(dx)) {
            m.velocity_into(x, t, o);
        }
    }
}

/// `v ≡ c`, ignoring the condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField {
    pub value: Vec<f64>,
    pub dy: usize,
}

impl VelocityField for ConstantField {
    fn dx(&self) -> usize {
        self.value.len()
    }
    fn dy(&self) -> usize {
        self.dy
    }
    fn velocity(&self, _x: &[f64], _y: &[f64], _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.value)
    }
}

/// `v + c` for an inner field `v`.
#[derive(Clone, Debug)]
pub struct ShiftedField<F> {
    pub inner: F,
    pub shift: Vec<f64>,
}

impl<F: VelocityField> VelocityField for ShiftedField<F> {
    fn dx(&self) -> usize {
        self.inner.dx()
    }
    fn dy(&self) -> usize {
        self.inner.dy()
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.inner.velocity(x, y, t, out);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
    }
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.inner.velocity_rows(xs, y, t, out);
        for row in out.chunks_exact_mut(self.shift.len()) {
            for (o, s) in row.iter_mut().zip(&self.shift) {
                *o += s;
            }
        }
    }
}

/// A field given by a closure `(x, y, t, out)`.
pub struct FnField<F> {
    pub dx: usize,
    pub dy: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64], f64, &mut [f64])> VelocityField for FnField<F> {
    fn dx(&self) -> usize {
        self.dx
    }
    fn dy(&self) -> usize {
        self.dy
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, y, t, out)
    }
}

/// Recorded Euler trajectory: `times[k] = t_k`, `states.row(k) = z_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Matrix,
}

impl SamplePath {
    pub fn endpoint(&self) -> &[f64] {
        self.states.row(self.states.rows() - 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_inputs<F: VelocityField + ?Sized>(field: &F, y: &[f64]) -> Result<()> {
    if y.len() != field.dy() {
        return Err(Error::DimensionMismatch {
            what: "condition y",
            expected: field.dy(),
            got: y.len(),
        });
    }
    Ok(())
}

fn check_finite(v: &[f64], z: &[f64], dx: usize, t: f64) -> Result<()> {
    if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
        let row = bad / dx;
        return Err(Error::NonFiniteField {
            t,
            norm: norm2(&z[row * dx..(row + 1) * dx]),
        });
    }
    Ok(())
}

/// Integrates every row of `z` (row-major, `dx` columns) in place with
/// `z_{k+1} = z_k + (T/N)·v(z_k, y, t_k)`.
pub fn euler_rows<F: VelocityField + ?Sized>(field: &F, y: &[f64], flow: &FlowConfig, z: &mut [f64]) -> Result<()> {
    check_inputs(field, y)?;
    let dx = field.dx();
    let h = flow.step_size();
    let mut v = vec![0.0; z.len()];
    for k in 0..flow.steps() {
        let t = flow.time(k);
        field.velocity_rows(z, y, t, &mut v);
        check_finite(&v, z, dx, t)?;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += h * vi;
        }
    }
    Ok(())
}

/// Algorithm-1 endpoint for a single starting point.
pub fn euler_sample<F: VelocityField + ?Sized>(field: &F, y: &[f64], flow: &FlowConfig, z0: &[f64]) -> Result<Vec<f64>> {
    if z0.len() != field.dx() {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: field.dx(),
            got: z0.len(),
        });
    }
    let mut z = z0.to_vec();
    euler_rows(field, y, flow, &mut z)?;
    Ok(z)
}

/// Like [`euler_sample`] but keeps every `(t_k, z_k)`.
pub fn euler_path<F: VelocityField + ?Sized>(field: &F, y: &[f64], flow: &FlowConfig, z0: &[f64]) -> Result<SamplePath> {
    check_inputs(field, y)?;
    let dx = field.dx();
    if z0.len() != dx {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: dx,
            got: z0.len(),
        });
    }
    let n = flow.steps();
    let h = flow.step_size();
    let mut states = Matrix::zeros(n + 1, dx);
    states.row_mut(0).copy_from_slice(z0);
    let mut z = z0.to_vec();
    let mut v = vec![0.0; dx];
    for k in 0..n {
        let t = flow.time(k);
        field.velocity(&z, y, t, &mut v);
        check_finite(&v, &z, dx, t)?;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += h * vi;
        }
        states.row_mut(k + 1).copy_from_slice(&z);
    }
    Ok(SamplePath {
        times: flow.grid(),
        states,
    })
}

fn initial_rows(rng: &RngStream, rows: Range<usize>, dx: usize) -> (Vec<RngStream>, Vec<f64>) {
    let mut streams = Vec::with_capacity(rows.len());
    let mut z = vec![0.0; rows.len() * dx];
    for (i, zi) in rows.zip(z.chunks_exact_mut(dx)) {
        let mut s = rng.substream(i as u64);
        s.fill_gauss(zi);
        streams.push(s);
    }
    (streams, z)
}

/// Euler endpoints for rows `rows` of a batch: row `i` starts at
/// `z0 ~ N(0, I)` drawn from `rng.substream(i)`.
pub fn sample_rows<F: VelocityField + ?Sized>(
    field: &F,
    y: &[f64],
    flow: &FlowConfig,
    rng: &RngStream,
    rows: Range<usize>,
) -> Result<Matrix> {
    let dx = field.dx();
    let mut out = Vec::with_capacity(rows.len() * dx);
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + CHUNK).min(rows.end);
        let (_, mut z) = initial_rows(rng, start..end, dx);
        euler_rows(field, y, flow, &mut z)?;
        out.extend_from_slice(&z);
        start = end;
    }
    Matrix::from_vec(rows.len(), dx, out)
}

/// `count` Euler endpoints from independent standard normal starts.
pub fn sample_batch<F: VelocityField + ?Sized>(
    field: &F,
    y: &[f64],
    flow: &FlowConfig,
    count: usize,
    rng: &RngStream,
) -> Result<Matrix> {
    if count == 0 {
        return Err(Error::Empty("sample count"));
    }
    sample_rows(field, y, flow, rng, 0..count)
}

fn sde_chunk(
    dx: usize,
    flow: &FlowConfig,
    streams: &mut [RngStream],
    z: &mut [f64],
    mut eval: impl FnMut(&[f64], f64, &mut [f64]),
) -> Result<()> {
    let h = flow.step_size();
    let mut v = vec![0.0; z.len()];
    // t_0 = 0: the diffusion is singular there, take a plain ODE step
    eval(z, 0.0, &mut v);
    check_finite(&v, z, dx, 0.0)?;
    for (zi, vi) in z.iter_mut().zip(&v) {
        *zi += h * vi;
    }
    for k in 1..flow.steps() {
        let t = flow.time(k);
        eval(z, t, &mut v);
        check_finite(&v, z, dx, t)?;
        let noise = libm::sqrt(2.0 * h / t);
        for ((zr, vr), s) in z.chunks_exact_mut(dx).zip(v.chunks_exact(dx)).zip(streams.iter_mut()) {
            for (zi, vi) in zr.iter_mut().zip(vr) {
                let drift = 2.0 * vi - *zi / t;
                *zi += h * drift + noise * s.gauss();
            }
        }
    }
    Ok(())
}

/// Reverse-SDE endpoints for rows `rows`; row `i` uses `rng.substream(i)`
/// for its start and its Brownian increments.
pub fn sde_sample_rows<F: VelocityField + ?Sized>(
    field: &F,
    y: &[f64],
    flow: &FlowConfig,
    rng: &RngStream,
    rows: Range<usize>,
) -> Result<Matrix> {
    check_inputs(field, y)?;
    if flow.steps() < 2 {
        return Err(Error::InvalidArgument("reverse SDE sampling needs at least 2 steps".into()));
    }
    let dx = field.dx();
    let mut out = Vec::with_capacity(rows.len() * dx);
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + CHUNK).min(rows.end);
        let (mut streams, mut z) = initial_rows(rng, start..end, dx);
        sde_chunk(dx, flow, &mut streams, &mut z, |z, t, v| field.velocity_rows(z, y, t, v))?;
        out.extend_from_slice(&z);
        start = end;
    }
    Matrix::from_vec(rows.len(), dx, out)
}

/// Euler–Maruyama on the reverse SDE with drift `2v − z/t` and diffusion `√(2/t)`.
pub fn sde_sample<F: VelocityField + ?Sized>(
    field: &F,
    y: &[f64],
    flow: &FlowConfig,
    count: usize,
    rng: &RngStream,
) -> Result<Matrix> {
    if count == 0 {
        return Err(Error::Empty("sample count"));
    }
    sde_sample_rows(field, y, flow, rng, 0..count)
}

/// Euler endpoints with one condition per row: row `i` integrates from
/// `z0 ~ N(0, I)` drawn from `rng.substream(i)` at condition `ys.row(i)`.
pub fn sample_joint_rows<F: VelocityField + ?Sized>(
    field: &F,
    ys: &Matrix,
    flow: &FlowConfig,
    rng: &RngStream,
    rows: Range<usize>,
) -> Result<Matrix> {
    let (dx, dy) = (field.dx(), field.dy());
    check_joint(ys, dy, &rows)?;
    let h = flow.step_size();
    let mut out = Vec::with_capacity(rows.len() * dx);
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + CHUNK).min(rows.end);
        let (_, mut z) = initial_rows(rng, start..end, dx);
        let y = &ys.as_slice()[start * dy..end * dy];
        let mut v = vec![0.0; z.len()];
        for k in 0..flow.steps() {
            let t = flow.time(k);
            field.velocity_pairs(&z, y, t, &mut v);
            check_finite(&v, &z, dx, t)?;
            for (zi, vi) in z.iter_mut().zip(&v) {
                *zi += h * vi;
            }
        }
        out.extend_from_slice(&z);
        start = end;
    }
    Matrix::from_vec(rows.len(), dx, out)
}

/// Reverse-SDE endpoints with one condition per row, streams as in
/// [`sde_sample_rows`].
pub fn sde_joint_rows<F: VelocityField + ?Sized>(
    field: &F,
    ys: &Matrix,
    flow: &FlowConfig,
    rng: &RngStream,
    rows: Range<usize>,
) -> Result<Matrix> {
    let (dx, dy) = (field.dx(), field.dy());
    check_joint(ys, dy, &rows)?;
    if flow.steps() < 2 {
        return Err(Error::InvalidArgument("reverse SDE sampling needs at least 2 steps".into()));
    }
    let mut out = Vec::with_capacity(rows.len() * dx);
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + CHUNK).min(rows.end);
        let (mut streams, mut z) = initial_rows(rng, start..end, dx);
        let y = &ys.as_slice()[start * dy..end * dy];
        sde_chunk(dx, flow, &mut streams, &mut z, |z, t, v| field.velocity_pairs(z, y, t, v))?;
        out.extend_from_slice(&z);
        start = end;
    }
    Matrix::from_vec(rows.len(), dx, out)
}

fn check_joint(ys: &Matrix, dy: usize, rows: &Range<usize>) -> Result<()> {
    if ys.cols() != dy {
        return Err(Error::DimensionMismatch {
            what: "condition columns",
            expected: dy,
            got: ys.cols(),
        });
    }
    if rows.end > ys.rows() {
        return Err(Error::DimensionMismatch {
            what: "condition rows",
            expected: rows.end,
            got: ys.rows(),
        });
    }
    Ok(())
}

/// Rows `G(z, y)` of a one-step generator, `z` from `rng.substream(i)`.
pub fn one_step_rows(generator: &Mlp, y: &[f64], rng: &RngStream, rows: Range<usize>) -> Result<Matrix> {
    let dx = generator.config().dx;
    check_inputs(generator, y)?;
    let mut out = Matrix::zeros(rows.len(), dx);
    if rows.is_empty() {
        return Ok(out);
    }
    let (_, z) = initial_rows(rng, rows, dx);
    generator.forward_rows(&z, y, 0.0, out.as_mut_slice());
    Ok(out)
}

pub fn one_step_generate(generator: &Mlp, y: &[f64], count: usize, rng: &RngStream) -> Result<Matrix> {
    one_step_rows(generator, y, rng, 0..count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::point_mass_flow_map;

    fn constant(c: f64) -> ConstantField {
        ConstantField { value: vec![c], dy: 0 }
    }

    #[test]
    fn constant_field_telescopes() {
        for n in [1, 7, 100] {
            let flow = FlowConfig::new(0.8, n).unwrap();
            let z = euler_sample(&constant(2.0), &[], &flow, &[0.0]).unwrap();
            assert!((z[0] - 1.6).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_is_one_field_evaluation() {
        let f = FnField {
            dx: 1,
            dy: 0,
            f: |x: &[f64], _: &[f64], t: f64, o: &mut [f64]| o[0] = 3.0 * x[0] + t,
        };
        let flow = FlowConfig::new(0.5, 1).unwrap();
        let z = euler_sample(&f, &[], &flow, &[2.0]).unwrap();
        assert_eq!(z[0], 2.0 + 0.5 * 6.0);
    }

    #[test]
    fn point_mass_endpoint_matches_flow_map() {
        let target = DiscreteConditionalTarget::point_mass(&[1.0]);
        let flow = FlowConfig::new(0.99, 4000).unwrap();
        let z = euler_sample(&target, &[], &flow, &[0.7]).unwrap();
        let exact = point_mass_flow_map(&[1.0], &[0.7], 0.99)[0];
        assert!((exact - 1.088_747_151_857_661_2).abs() < 1e-15);
        assert!((z[0] - exact).abs() < 5e-3);
    }

    #[test]
    fn path_records_grid() {
        let flow = FlowConfig::new(0.5, 4).unwrap();
        let p = euler_path(&constant(1.0), &[], &flow, &[0.0]).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.times[0], 0.0);
        assert_eq!(p.times[4], 0.5);
        assert!((p.endpoint()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_field_reports_time_and_norm() {
        let f = FnField {
            dx: 1,
            dy: 0,
            f: |_: &[f64], _: &[f64], t: f64, o: &mut [f64]| o[0] = if t > 0.35 { f64::NAN } else { 1.0 },
        };
        let flow = FlowConfig::new(0.8, 8).unwrap();
        match euler_sample(&f, &[], &flow, &[0.0]) {
            Err(Error::NonFiniteField { t, norm }) => {
                assert!((t - 0.4).abs() < 1e-12);
                assert!((norm - 0.4).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_is_independent_of_chunking() {
        let target = DiscreteConditionalTarget::point_mass(&[0.3, -0.2]);
        let flow = FlowConfig::new(0.9, 20).unwrap();
        let rng = RngStream::new(5, 1);
        let all = sample_batch(&target, &[], &flow, 600, &rng).unwrap();
        let tail = sample_rows(&target, &[], &flow, &rng, 300..600).unwrap();
        assert_eq!(all.row(450), tail.row(150));
        let again = sample_batch(&target, &[], &flow, 600, &rng).unwrap();
        assert_eq!(all, again);
        let sde = sde_sample(&target, &[], &flow, 600, &rng).unwrap();
        let sde_tail = sde_sample_rows(&target, &[], &flow, &rng, 500..600).unwrap();
        assert_eq!(sde.row(555), sde_tail.row(55));
        let ys = Matrix::zeros(600, 0);
        let joint = sample_joint_rows(&target, &ys, &flow, &rng, 0..600).unwrap();
        assert_eq!(joint, all);
        let sde_joint = sde_joint_rows(&target, &ys, &flow, &rng, 0..600).unwrap();
        assert_eq!(sde_joint, sde);
    }

    #[test]
    fn sde_requires_two_steps() {
        let flow = FlowConfig::new(0.9, 1).unwrap();
        assert!(sde_sample(&constant(0.0), &[], &flow, 4, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn one_step_zero_count_is_empty() {
        let g = Mlp::zeros(crate::nn::MlpConfig::generator(2, 1, vec![4])).unwrap();
        let m = one_step_generate(&g, &[0.5], 0, &RngStream::new(0, 0)).unwrap();
        assert_eq!((m.rows(), m.cols()), (0, 2));
    }
}
