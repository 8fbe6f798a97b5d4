//! Velocity matching and one-step distillation.
//!
//! The regression pairs come from the interpolant: for a data point
//! `(X, Y)`, time `t ~ U(0, T)` and noise `W ~ N(0, I)` the network sees
//! `(tX + √(1−t²)W, Y, t)` and is fit to `X − t/√(1−t²)·W`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{DataSpec, Dataset, FlowConfig};
use crate::error::{Error, Result};
use crate::flow::{euler_rows, VelocityField, CHUNK};
use crate::linalg::Matrix;
use crate::nn::{Adam, AdamConfig, Batch, Mlp, MlpConfig};
use crate::rng::RngStream;

const STREAM_INIT: u64 = 0x1517;
const STREAM_BATCHES: u64 = 0xba7c;
const STREAM_DISTILL_NOISE: u64 = 0xd157;
const STREAM_DISTILL_SPLIT: u64 = 0x5b17;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fresh `(t, W)` draws per data point per epoch.
    pub draws_per_example: usize,
    pub stop_time: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            draws_per_example: 1,
            stop_time: 0.99,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        if self.draws_per_example == 0 {
            return Err(Error::InvalidArgument("draws_per_example must be ≥ 1".into()));
        }
        if !(self.stop_time > 0.0 && self.stop_time < 1.0) {
            return Err(Error::TimeOutOfRange {
                t: self.stop_time,
                range: "(0, 1)",
            });
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A trained velocity network together with the data layout and stopping
/// time it was fit for.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    pub net: Mlp,
    pub spec: DataSpec,
    pub stop_time: f64,
}

impl VelocityField for VelocityModel {
    fn dx(&self) -> usize {
        self.spec.dx
    }
    fn dy(&self) -> usize {
        self.spec.dy
    }
    fn velocity(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.net.forward_rows(x, y, t, out)
    }
    fn velocity_rows(&self, xs: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.net.forward_rows(xs, y, t, out)
    }
    fn velocity_pairs(&self, xs: &[f64], ys: &[f64], t: f64, out: &mut [f64]) {
        self.net.forward_pairs(xs, ys, t, out)
    }
}

/// Network input and regression target for one `(x, w, t)` draw.
pub fn velocity_pair(x: &[f64], w: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let a = libm::sqrt(1.0 - t * t);
    let c = t / a;
    let input = x.iter().zip(w).map(|(xi, wi)| t * xi + a * wi).collect();
    let target = x.iter().zip(w).map(|(xi, wi)| xi - c * wi).collect();
    (input, target)
}

fn batch_from_indices(dataset: &Dataset, indices: &[usize], rng: &mut RngStream, stop_time: f64) -> Batch {
    let (dx, dy) = (dataset.spec.dx, dataset.spec.dy);
    let rows = indices.len();
    let mut x_in = Matrix::zeros(rows, dx);
    let mut y_in = Matrix::zeros(rows, dy);
    let mut target = Matrix::zeros(rows, dx);
    let mut t_in = Vec::with_capacity(rows);
    let mut w = vec![0.0; dx];
    for (r, &i) in indices.iter().enumerate() {
        let t = rng.uniform() * stop_time;
        rng.fill_gauss(&mut w);
        let a = libm::sqrt(1.0 - t * t);
        let c = t / a;
        let x = dataset.x(i);
        for j in 0..dx {
            x_in.row_mut(r)[j] = t * x[j] + a * w[j];
            target.row_mut(r)[j] = x[j] - c * w[j];
        }
        y_in.row_mut(r).copy_from_slice(dataset.y(i));
        t_in.push(t);
    }
    Batch {
        x_in,
        y_in,
        t_in,
        target,
    }
}

/// Minibatch with independently drawn data indices, times and noises.
pub fn make_batch(dataset: &Dataset, rng: &mut RngStream, batch_size: usize, stop_time: f64) -> Result<Batch> {
    if dataset.n() == 0 {
        return Err(Error::Empty("dataset"));
    }
    if !(stop_time > 0.0 && stop_time < 1.0) {
        return Err(Error::TimeOutOfRange {
            t: stop_time,
            range: "(0, 1)",
        });
    }
    let indices: Vec<usize> = (0..batch_size).map(|_| rng.below(dataset.n())).collect();
    Ok(batch_from_indices(dataset, &indices, rng, stop_time))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Mean minibatch loss per epoch.
    pub trace: Vec<f64>,
}

fn check_dataset(dataset: &Dataset, net: &MlpConfig, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if dataset.n() < cfg.batch_size {
        return Err(Error::InvalidArgument(alloc::format!(
            "dataset has {} rows, fewer than batch_size {}",
            dataset.n(),
            cfg.batch_size
        )));
    }
    if net.dx != dataset.spec.dx || net.dy != dataset.spec.dy {
        return Err(Error::DimensionMismatch {
            what: "network vs dataset (dx + dy)",
            expected: dataset.spec.dx + dataset.spec.dy,
            got: net.dx + net.dy,
        });
    }
    net.validate()
}

/// Runs `cfg.epochs` passes over shuffled data with one fresh `(t, W)` per
/// visit (`draws_per_example` visits per point), calling `on_epoch(epoch,
/// mean_loss)` after each.
fn fit<B>(
    net: &mut Mlp,
    n: usize,
    cfg: &TrainConfig,
    rng: &mut RngStream,
    mut make: B,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>>
where
    B: FnMut(&[usize], &mut RngStream) -> Batch,
{
    let mut adam = Adam::new(cfg.adam, net.params().len());
    let mut order: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(i, cfg.draws_per_example)).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = make(idx, rng);
            let (loss, grad) = net.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            adam.step(net, &grad)?;
            total += loss * idx.len() as f64;
        }
        let mean = total / order.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok(trace)
}

pub fn train_velocity(dataset: &Dataset, net: &MlpConfig, cfg: &TrainConfig) -> Result<TrainOutcome<VelocityModel>> {
    train_velocity_with(dataset, net, cfg, |_, _| {})
}

/// Velocity matching by minibatch Adam; `on_epoch(epoch, mean_loss)`
/// observes progress.
pub fn train_velocity_with(
    dataset: &Dataset,
    net_cfg: &MlpConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<VelocityModel>> {
    check_dataset(dataset, net_cfg, cfg)?;
    let mut net = Mlp::new(net_cfg.clone(), &mut RngStream::new(cfg.seed, STREAM_INIT))?;
    let mut rng = RngStream::new(cfg.seed, STREAM_BATCHES);
    let t_max = cfg.stop_time;
    let trace = fit(
        &mut net,
        dataset.n(),
        cfg,
        &mut rng,
        |idx, rng| batch_from_indices(dataset, idx, rng, t_max),
        on_epoch,
    )?;
    Ok(TrainOutcome {
        model: VelocityModel {
            net,
            spec: dataset.spec.clone(),
            stop_time: cfg.stop_time,
        },
        trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distilled {
    /// `G(z, y)`: input `(z, y)`, no time input.
    pub generator: Mlp,
    pub train_rmse: f64,
    pub holdout_rmse: f64,
    pub trace: Vec<f64>,
}

/// Noise/endpoint pairs: pair `i` uses condition row `i mod c` and noise
/// from stream `i`. Returns `(z, y, endpoint)` matrices.
pub fn flow_pairs<F: VelocityField + ?Sized>(
    field: &F,
    flow: &FlowConfig,
    conditions: &Matrix,
    n_pairs: usize,
    seed: u64,
) -> Result<(Matrix, Matrix, Matrix)> {
    let (dx, dy) = (field.dx(), field.dy());
    if conditions.cols() != dy || conditions.rows() == 0 {
        return Err(Error::DimensionMismatch {
            what: "distillation conditions",
            expected: dy,
            got: conditions.cols(),
        });
    }
    let c = conditions.rows();
    let noise = RngStream::new(seed, STREAM_DISTILL_NOISE);
    let mut zs = Matrix::zeros(n_pairs, dx);
    let mut ys = Matrix::zeros(n_pairs, dy);
    let mut ends = Matrix::zeros(n_pairs, dx);
    for i in 0..n_pairs {
        noise.substream(i as u64).fill_gauss(zs.row_mut(i));
        ys.row_mut(i).copy_from_slice(conditions.row(i % c));
    }
    for j in 0..c {
        let rows: Vec<usize> = (j..n_pairs).step_by(c).collect();
        for chunk in rows.chunks(CHUNK) {
            let mut z: Vec<f64> = chunk.iter().flat_map(|&i| zs.row(i).iter().copied()).collect();
            euler_rows(field, conditions.row(j), flow, &mut z)?;
            for (k, &i) in chunk.iter().enumerate() {
                ends.row_mut(i).copy_from_slice(&z[k * dx..(k + 1) * dx]);
            }
        }
    }
    Ok((zs, ys, ends))
}

fn rmse(net: &Mlp, zs: &Matrix, ys: &Matrix, ends: &Matrix, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let z = zs.select_rows(rows);
    let y = ys.select_rows(rows);
    let e = ends.select_rows(rows);
    let out = net.forward_batch(&z, &y, &vec![0.0; rows.len()])?;
    let sq: f64 = out.as_slice().iter().zip(e.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(libm::sqrt(sq / e.as_slice().len() as f64))
}

/// Fits a one-step generator `G(z, y)` to Euler endpoints of `field`,
/// holding out 10% of the pairs (fixed split from `train.seed`).
pub fn distill<F: VelocityField + ?Sized>(
    field: &F,
    flow: &FlowConfig,
    conditions: &Matrix,
    n_pairs: usize,
    gen_cfg: &MlpConfig,
    train: &TrainConfig,
) -> Result<Distilled> {
    if n_pairs == 0 {
        return Err(Error::Empty("distillation pairs"));
    }
    if gen_cfg.dx != field.dx() || gen_cfg.dy != field.dy() {
        return Err(Error::DimensionMismatch {
            what: "generator vs field (dx + dy)",
            expected: field.dx() + field.dy(),
            got: gen_cfg.dx + gen_cfg.dy,
        });
    }
    gen_cfg.validate()?;
    train.validate()?;
    let (zs, ys, ends) = flow_pairs(field, flow, conditions, n_pairs, train.seed)?;

    let mut order: Vec<usize> = (0..n_pairs).collect();
    RngStream::new(train.seed, STREAM_DISTILL_SPLIT).shuffle(&mut order);
    let holdout_len = if n_pairs >= 10 { n_pairs / 10 } else { 0 };
    let (holdout, fit_rows) = order.split_at(holdout_len);
    let fit_rows = fit_rows.to_vec();

    let mut generator = Mlp::new(gen_cfg.clone(), &mut RngStream::new(train.seed, STREAM_INIT))?;
    let mut rng = RngStream::new(train.seed, STREAM_BATCHES);
    let trace = fit(
        &mut generator,
        fit_rows.len(),
        train,
        &mut rng,
        |idx, _| {
            let rows: Vec<usize> = idx.iter().map(|&k| fit_rows[k]).collect();
            Batch {
                x_in: zs.select_rows(&rows),
                y_in: ys.select_rows(&rows),
                t_in: vec![0.0; rows.len()],
                target: ends.select_rows(&rows),
            }
        },
        |_, _| {},
    )?;
    Ok(Distilled {
        train_rmse: rmse(&generator, &zs, &ys, &ends, &fit_rows)?,
        holdout_rmse: rmse(&generator, &zs, &ys, &ends, holdout)?,
        generator,
        trace,
    })
}

/// Mean and standard error of a Monte-Carlo average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_error: libm::sqrt(var / n),
        }
    }
}

/// Draws `(X, Y)` from the joint law into the two buffers.
pub trait JointSampler {
    fn draw(&self, rng: &mut RngStream, x: &mut [f64], y: &mut [f64]);
}

impl JointSampler for crate::oracle::DiscreteConditionalTarget {
    /// Only meaningful for unconditional targets (`dy = 0`).
    fn draw(&self, rng: &mut RngStream, x: &mut [f64], y: &mut [f64]) {
        self.mixture(y).sample_into(rng, x)
    }
}

fn population_draws<S: JointSampler + ?Sized>(
    sampler: &S,
    dx: usize,
    dy: usize,
    stop_time: f64,
    draws: usize,
    rng: &mut RngStream,
    mut each: impl FnMut(&[f64], &[f64], f64, &[f64]) -> f64,
) -> Estimate {
    let mut x = vec![0.0; dx];
    let mut y = vec![0.0; dy];
    let mut w = vec![0.0; dx];
    let mut input = vec![0.0; dx];
    let mut target = vec![0.0; dx];
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        sampler.draw(rng, &mut x, &mut y);
        let t = rng.uniform() * stop_time;
        rng.fill_gauss(&mut w);
        let a = libm::sqrt(1.0 - t * t);
        for j in 0..dx {
            input[j] = t * x[j] + a * w[j];
            target[j] = x[j] - t / a * w[j];
        }
        values.push(each(&input, &y, t, &target));
    }
    Estimate::from_values(&values)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Monte-Carlo `L(v) = E‖X − t/√(1−t²)W − v(W_t, Y, t)‖²`, `t ~ U(0, T)`.
pub fn population_loss<F, S>(field: &F, sampler: &S, stop_time: f64, draws: usize, rng: &mut RngStream) -> Estimate
where
    F: VelocityField + ?Sized,
    S: JointSampler + ?Sized,
{
    let mut v = vec![0.0; field.dx()];
    population_draws(sampler, field.dx(), field.dy(), stop_time, draws, rng, |x, y, t, r| {
        field.velocity(x, y, t, &mut v);
        sq_dist(r, &v)
    })
}

/// Paired Monte-Carlo estimate of `L(v) − L(v_ref)` on shared draws.
pub fn loss_difference<F, G, S>(field: &F, reference: &G, sampler: &S, stop_time: f64, draws: usize, rng: &mut RngStream) -> Estimate
where
    F: VelocityField + ?Sized,
    G: VelocityField + ?Sized,
    S: JointSampler + ?Sized,
{
    let mut v = vec![0.0; field.dx()];
    let mut u = vec![0.0; field.dx()];
    population_draws(sampler, field.dx(), field.dy(), stop_time, draws, rng, |x, y, t, r| {
        field.velocity(x, y, t, &mut v);
        reference.velocity(x, y, t, &mut u);
        sq_dist(r, &v) - sq_dist(r, &u)
    })
}

/// Monte-Carlo `(1/T)∫₀ᵀ E‖v − v_ref‖²(W_t, Y, t) dt`.
pub fn field_error<F, G, S>(field: &F, reference: &G, sampler: &S, stop_time: f64, draws: usize, rng: &mut RngStream) -> Estimate
where
    F: VelocityField + ?Sized,
    G: VelocityField + ?Sized,
    S: JointSampler + ?Sized,
{
    let mut v = vec![0.0; field.dx()];
    let mut u = vec![0.0; field.dx()];
    population_draws(sampler, field.dx(), field.dy(), stop_time, draws, rng, |x, y, t, _| {
        field.velocity(x, y, t, &mut v);
        reference.velocity(x, y, t, &mut u);
        sq_dist(&v, &u)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ConstantField;

    fn dataset_1d(xs: &[f64]) -> Dataset {
        let spec = DataSpec::new(1, 0).unwrap();
        Dataset::new(spec, Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap(), Matrix::zeros(xs.len(), 0)).unwrap()
    }

    #[test]
    fn pair_examples() {
        let (i, t) = velocity_pair(&[2.0], &[0.3], 0.0);
        assert_eq!((i[0], t[0]), (0.3, 2.0));
        let (i, t) = velocity_pair(&[1.0], &[1.0], 0.6);
        assert!((i[0] - 1.4).abs() < 1e-15);
        assert!((t[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn batch_targets_follow_the_interpolant() {
        let ds = dataset_1d(&[1.0, -2.0, 0.5]);
        let b = make_batch(&ds, &mut RngStream::new(3, 0), 64, 0.9).unwrap();
        for r in 0..b.len() {
            let t = b.t_in[r];
            assert!((0.0..0.9).contains(&t));
            let a = libm::sqrt(1.0 - t * t);
            // recover w from the input, then x from the target
            let (xin, tg) = (b.x_in.row(r)[0], b.target.row(r)[0]);
            let x = a * a * tg + t * xin;
            assert!([1.0, -2.0, 0.5].iter().any(|v| (v - x).abs() < 1e-12));
        }
        let again = make_batch(&ds, &mut RngStream::new(3, 0), 64, 0.9).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn training_is_reproducible_and_descends() {
        let xs: Vec<f64> = (0..64).map(|i| (i as f64 / 32.0) - 1.0).collect();
        let ds = dataset_1d(&xs);
        let net = MlpConfig::velocity(1, 0).with_hidden(vec![16, 16]);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            stop_time: 0.9,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let a = train_velocity(&ds, &net, &cfg).unwrap();
        let b = train_velocity(&ds, &net, &cfg).unwrap();
        assert_eq!(a, b);
        let best = a.trace.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best <= a.trace[0]);
    }

    #[test]
    fn batch_larger_than_dataset_rejected() {
        let ds = dataset_1d(&[0.0, 1.0]);
        let cfg = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        assert!(train_velocity(&ds, &MlpConfig::velocity(1, 0), &cfg).is_err());
    }

    #[test]
    fn distill_rejects_zero_pairs() {
        let field = ConstantField { value: vec![1.0], dy: 0 };
        let flow = FlowConfig::new(0.9, 10).unwrap();
        let r = distill(
            &field,
            &flow,
            &Matrix::zeros(1, 0),
            0,
            &MlpConfig::generator(1, 0, vec![8]),
            &TrainConfig::default(),
        );
        assert_eq!(r.unwrap_err(), Error::Empty("distillation pairs"));
    }

    #[test]
    fn affine_flow_distills_exactly_with_linear_generator() {
        let field = ConstantField { value: vec![0.7], dy: 0 };
        let flow = FlowConfig::new(0.9, 20).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 64,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let d = distill(&field, &flow, &Matrix::zeros(1, 0), 2000, &MlpConfig::generator(1, 0, vec![]), &cfg).unwrap();
        assert!(d.holdout_rmse < 0.02, "holdout rmse {}", d.holdout_rmse);
    }
}
