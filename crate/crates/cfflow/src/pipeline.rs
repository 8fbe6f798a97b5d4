//! Stage implementations and the `run` driver.
//!
//! Stages share one [`Pipeline`]. Data is rebuilt from the config on demand
//! (generation is a pure function of the seed), while trained networks are
//! read back from checkpoints in the output directory when an earlier stage
//! of the same process has not produced them, so each subcommand can run on
//! its own.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cfflow_core::eval::{
    mean_std, moment_mse, prediction_interval, shape_reference, slice_tv, w2_1d, EvalReport, IntervalReport, ReferencePool,
    REFERENCE_POOL,
};
use cfflow_core::flow::{self, VelocityField};
use cfflow_core::nn::{lipschitz, Mlp};
use cfflow_core::oracle::self_check;
use cfflow_core::synthdata::{gen_regression, gen_shape, RegressionModel, ScalingRecord, Shape};
use cfflow_core::training::{self, VelocityModel};
use cfflow_core::{DataSpec, Dataset, DiscreteConditionalTarget, FlowConfig, Matrix, RngStream};

use crate::checkpoint::{self, Checkpoint, ModelKind};
use crate::config::{ExperimentConfig, FieldChoice, Sampler, Source, Stage};
use crate::error::{Error, Result};
use crate::io;
use crate::oracle_file::{load_target, TargetFile};
use crate::parallel::{map_indexed, sample_condition, sample_joint, Integrator};
use crate::plot::scatter_svg;
use crate::report::{write_run, StageReport};

pub const DATA_FILE: &str = "data.csv";
pub const HOLDOUT_FILE: &str = "holdout.csv";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SAMPLES_PLOT: &str = "samples.svg";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SDE_SAMPLES_FILE: &str = "samples_sde.csv";
pub const GENERATOR_FILE: &str = "generator.ckpt";
pub const DISTILL_TRACE_FILE: &str = "distill_trace.csv";
pub const GENERATOR_SAMPLES_FILE: &str = "generator_samples.csv";
pub const TV_FILE: &str = "eval_tv.csv";
pub const MOMENTS_FILE: &str = "eval_moments.csv";
pub const INTERVALS_FILE: &str = "eval_intervals.csv";

const STREAM_HOLDOUT: u64 = 0x4001;
const STREAM_ORACLE_DATA: u64 = 0x4002;
const STREAM_SAMPLE: u64 = 0x5001;
const STREAM_SAMPLE_SDE: u64 = 0x5002;
const STREAM_JOINT_Y: u64 = 0x5003;
const STREAM_DISTILL_Y: u64 = 0x5004;
const STREAM_GENERATOR: u64 = 0x5005;
const STREAM_EVAL_Y: u64 = 0x6001;
const STREAM_EVAL_NOISE: u64 = 0x6002;
const STREAM_CASES: u64 = 0x6003;
const STREAM_ORACLE_CHECK: u64 = 0x7001;
const STREAM_LIPSCHITZ: u64 = 0x7002;
const POOL_SEED_OFFSET: u64 = 0x9e37_79b9;
const LIPSCHITZ_PROBES: usize = 200;

impl From<Sampler> for Integrator {
    fn from(s: Sampler) -> Self {
        match s {
            Sampler::Ode => Integrator::Ode,
            Sampler::Sde => Integrator::Sde,
        }
    }
}

/// Training data in model units, an optional holdout (same units) and the
/// map back to original units.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub holdout: Option<Dataset>,
    pub scaling: ScalingRecord,
}

/// Draws `n` pairs from an atom-mixture target, conditions uniform over its keys.
pub fn oracle_dataset(target: &DiscreteConditionalTarget, n: usize, seed: u64) -> Result<Dataset> {
    let (dx, dy) = (target.dx(), target.dy());
    let mut rng = RngStream::new(seed, STREAM_ORACLE_DATA);
    let mut xs = Vec::with_capacity(n * dx);
    let mut ys = Vec::with_capacity(n * dy);
    let keys = target.conditions();
    for _ in 0..n {
        let key = &keys[rng.below(keys.len())].0;
        let y = if key.len() == dy { key.clone() } else { vec![0.0; dy] };
        xs.extend(target.sample(&y, &mut rng));
        ys.extend_from_slice(&y);
    }
    Ok(Dataset::new(DataSpec::new(dx, dy)?, Matrix::from_vec(n, dx, xs)?, Matrix::from_vec(n, dy, ys)?)?)
}

fn split_holdout(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    let k = (d.n() as f64 * fraction).round() as usize;
    if k == 0 {
        return Ok((d.clone(), None));
    }
    if k >= d.n() {
        return Err(Error::Config(format!("holdout_fraction {fraction} leaves no training rows")));
    }
    let mut order: Vec<usize> = (0..d.n()).collect();
    RngStream::new(seed, STREAM_HOLDOUT).shuffle(&mut order);
    let (hold, keep) = order.split_at(k);
    let (mut hold, mut keep) = (hold.to_vec(), keep.to_vec());
    hold.sort_unstable();
    keep.sort_unstable();
    let pick = |rows: &[usize]| Dataset::new(d.spec.clone(), d.xs.select_rows(rows), d.ys.select_rows(rows));
    Ok((pick(&keep)?, Some(pick(&hold)?)))
}

/// Per-condition TV outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TvOutcome {
    pub conditions: Vec<f64>,
    pub tv: Vec<f64>,
    /// How many conditions were scored against a reference KDE rather than
    /// an exact slice density.
    pub kde_references: usize,
}

/// For `count` conditions `y` drawn from `shape`, generates `per` samples
/// of `X | Y = y`, fits a KDE and scores its TV against the shape's slice.
pub fn eval_tv<F>(field: &F, shape: Shape, flow: &FlowConfig, count: usize, per: usize, how: Integrator, seed: u64) -> Result<TvOutcome>
where
    F: VelocityField + Sync + ?Sized,
{
    let mut rng = RngStream::new(seed, STREAM_EVAL_Y);
    let conditions: Vec<f64> = (0..count).map(|_| shape.draw(&mut rng).1).collect();
    let pool = if conditions.iter().any(|&y| shape.slice_density(y).is_none()) {
        Some(ReferencePool::new(shape, REFERENCE_POOL, seed.wrapping_add(POOL_SEED_OFFSET))?)
    } else {
        None
    };
    let noise = RngStream::new(seed, STREAM_EVAL_NOISE);
    let scored = map_indexed(count, |c| {
        let y = conditions[c];
        let s = sample_condition_seq(field, &[y], flow, per, &noise.substream(c as u64), how)?;
        let reference = shape_reference(shape, y, pool.as_ref())?;
        Ok((slice_tv(s.as_slice(), &reference)?, !reference.is_exact()))
    })?;
    Ok(TvOutcome {
        conditions,
        kde_references: scored.iter().filter(|s| s.1).count(),
        tv: scored.into_iter().map(|s| s.0).collect(),
    })
}

/// Sequential sampling for use inside an already parallel map.
fn sample_condition_seq<F>(field: &F, y: &[f64], flow: &FlowConfig, count: usize, rng: &RngStream, how: Integrator) -> Result<Matrix>
where
    F: VelocityField + ?Sized,
{
    Ok(match how {
        Integrator::Ode => flow::sample_batch(field, y, flow, count, rng)?,
        Integrator::Sde => flow::sde_sample(field, y, flow, count, rng)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentsOutcome {
    pub conditions: Matrix,
    /// `(mean, std)` of the generated samples per condition.
    pub estimates: Vec<(f64, f64)>,
    pub truths: Vec<(f64, f64)>,
    pub mse1: f64,
    pub mse2: f64,
}

/// Conditional mean and standard deviation of generated samples against
/// the model's closed-form truths, at `count` conditions `Y ~ N(0, I)`.
/// `scaling` maps samples and conditions between model and original units.
#[allow(clippy::too_many_arguments)]
pub fn eval_moments<F>(
    field: &F,
    model: RegressionModel,
    scaling: &ScalingRecord,
    flow: &FlowConfig,
    count: usize,
    per: usize,
    how: Integrator,
    seed: u64,
) -> Result<MomentsOutcome>
where
    F: VelocityField + Sync + ?Sized,
{
    let dy = model.dy();
    let mut rng = RngStream::new(seed, STREAM_EVAL_Y);
    let mut conditions = Matrix::zeros(count, dy);
    for c in 0..count {
        conditions.row_mut(c).copy_from_slice(&model.draw_condition(&mut rng));
    }
    let noise = RngStream::new(seed, STREAM_EVAL_NOISE);
    let estimates = map_indexed(count, |c| {
        let mut y = conditions.row(c).to_vec();
        scaling.apply_y(&mut y);
        let mut s = sample_condition_seq(field, &y, flow, per, &noise.substream(c as u64), how)?;
        scaling.invert_x(&mut s);
        Ok(mean_std(s.as_slice()))
    })?;
    let truths: Vec<(f64, f64)> = conditions
        .iter_rows()
        .map(|y| (model.conditional_mean(y), model.conditional_std(y)))
        .collect();
    let (mse1, mse2) = moment_mse(&estimates, &truths)?;
    Ok(MomentsOutcome {
        conditions,
        estimates,
        truths,
        mse1,
        mse2,
    })
}

/// Student-t prediction intervals from `per` generated samples at each case
/// condition, one report per level in `alphas`. Cases are `(y, x)` in
/// original units.
#[allow(clippy::too_many_arguments)]
pub fn eval_intervals<F>(
    field: &F,
    cases_y: &Matrix,
    truths: &[f64],
    scaling: &ScalingRecord,
    flow: &FlowConfig,
    per: usize,
    alphas: &[f64],
    how: Integrator,
    seed: u64,
) -> Result<Vec<IntervalReport>>
where
    F: VelocityField + Sync + ?Sized,
{
    if field.dx() != 1 {
        return Err(Error::Config("prediction intervals need a one-dimensional response (dx = 1)".into()));
    }
    let noise = RngStream::new(seed, STREAM_EVAL_NOISE);
    let samples = map_indexed(cases_y.rows(), |c| {
        let mut y = cases_y.row(c).to_vec();
        scaling.apply_y(&mut y);
        let mut s = sample_condition_seq(field, &y, flow, per, &noise.substream(c as u64), how)?;
        scaling.invert_x(&mut s);
        Ok(s.into_vec())
    })?;
    alphas
        .iter()
        .map(|&a| {
            let intervals = samples.iter().map(|s| prediction_interval(s, a)).collect::<cfflow_core::Result<Vec<_>>>()?;
            Ok(IntervalReport::new(a, &intervals, truths)?)
        })
        .collect()
}

/// Held-out `(y, x)` cases for interval evaluation from a regression model.
pub fn regression_cases(model: RegressionModel, count: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    let mut rng = RngStream::new(seed, STREAM_CASES);
    let mut ys = Matrix::zeros(count, model.dy());
    let mut xs = Vec::with_capacity(count);
    for c in 0..count {
        let y = model.draw_condition(&mut rng);
        xs.push(model.draw_response(&y, &mut rng));
        ys.row_mut(c).copy_from_slice(&y);
    }
    Ok((ys, xs))
}

/// Name of the coverage metric for level `alpha`, e.g. `cr_0.95`.
pub fn coverage_metric(alpha: f64) -> String {
    format!("cr_{}", 1.0 - alpha)
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    /// Print per-epoch progress to stderr.
    pub progress: bool,
    data: Option<Prepared>,
    target: Option<DiscreteConditionalTarget>,
    model: Option<Checkpoint>,
    generator: Option<Checkpoint>,
    reports: Vec<StageReport>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            cfg,
            progress: false,
            data: None,
            target: None,
            model: None,
            generator: None,
            reports: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.progress {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn target(&mut self) -> Result<&DiscreteConditionalTarget> {
        if self.target.is_none() {
            let t = match self.cfg.data.target.clone() {
                Some(p) => {
                    self.inputs.push(p.clone());
                    load_target(&p)?
                }
                None => TargetFile::two_atoms().build()?,
            };
            self.target = Some(t);
        }
        Ok(self.target.as_ref().expect("set above"))
    }

    /// Builds (once) the training data described by the config.
    pub fn data(&mut self) -> Result<&Prepared> {
        if self.data.is_none() {
            let seed = self.cfg.seed;
            let n = self.cfg.data.n;
            let prepared = match self.cfg.data.source {
                Source::Shape => Prepared {
                    train: gen_shape(self.cfg.shape()?, n, seed)?,
                    holdout: None,
                    scaling: ScalingRecord::identity(),
                },
                Source::Regression => {
                    let d = gen_regression(self.cfg.regression_model()?, n, seed)?;
                    let scaling = if self.cfg.data.scale {
                        ScalingRecord::fit(&d, true, true)?
                    } else {
                        ScalingRecord::identity()
                    };
                    Prepared {
                        train: scaling.apply(&d)?,
                        holdout: None,
                        scaling,
                    }
                }
                Source::Csv => {
                    let path = self.cfg.data.path.clone().expect("validated");
                    let (dx, dy) = (self.cfg.data.dx.expect("validated"), self.cfg.data.dy.expect("validated"));
                    self.inputs.push(path.clone());
                    let (d, scaling) = io::load_csv(&path, dx, dy, self.cfg.data.scale)?;
                    let (train, holdout) = split_holdout(&d, self.cfg.data.holdout_fraction, seed)?;
                    Prepared { train, holdout, scaling }
                }
                Source::Oracle => {
                    let train = oracle_dataset(self.target()?, n, seed)?;
                    Prepared {
                        train,
                        holdout: None,
                        scaling: ScalingRecord::identity(),
                    }
                }
            };
            self.data = Some(prepared);
        }
        Ok(self.data.as_ref().expect("set above"))
    }

    fn checkpoint(&mut self, kind: ModelKind) -> Result<&Checkpoint> {
        let (slot_empty, file, stage) = match kind {
            ModelKind::Velocity => (self.model.is_none(), MODEL_FILE, "train"),
            ModelKind::Generator => (self.generator.is_none(), GENERATOR_FILE, "distill"),
        };
        if slot_empty {
            let path = self.out(file);
            if !path.is_file() {
                return Err(Error::Config(format!("{} not found; run `{stage}` first", path.display())));
            }
            let c = checkpoint::load(&path)?;
            if c.kind != kind {
                return Err(Error::Config(format!("{} holds a {:?} network, expected {kind:?}", path.display(), c.kind)));
            }
            self.inputs.push(path);
            match kind {
                ModelKind::Velocity => self.model = Some(c),
                ModelKind::Generator => self.generator = Some(c),
            }
        }
        Ok(match kind {
            ModelKind::Velocity => self.model.as_ref(),
            ModelKind::Generator => self.generator.as_ref(),
        }
        .expect("set above"))
    }

    /// The velocity field selected by `sample.field`, with the scaling
    /// between model and original units.
    fn field(&mut self) -> Result<(Box<dyn VelocityField + Sync>, ScalingRecord)> {
        match self.cfg.sample.field {
            FieldChoice::Oracle => Ok((Box::new(self.target()?.clone()), ScalingRecord::identity())),
            FieldChoice::Model => {
                let t = self.cfg.flow.stop_time;
                let c = self.checkpoint(ModelKind::Velocity)?;
                if c.stop_time != t {
                    return Err(Error::Config(format!(
                        "model was trained with stop time {}, but flow.stop_time = {t}",
                        c.stop_time
                    )));
                }
                let m = VelocityModel {
                    net: c.net.clone(),
                    spec: c.spec.clone(),
                    stop_time: c.stop_time,
                };
                Ok((Box::new(m), c.scaling.clone()))
            }
        }
    }

    /// Conditions in model units: the listed ones, or `count` rows drawn
    /// from the training data.
    fn conditions(&mut self, count: usize, stream: u64) -> Result<(Matrix, bool)> {
        let seed = self.cfg.seed;
        if let Some(list) = self.cfg.sample.conditions.clone() {
            let scaling = self.data()?.scaling.clone();
            let dy = list.first().map_or(0, Vec::len);
            let mut m = Matrix::from_rows(dy, &list)?;
            for r in 0..m.rows() {
                scaling.apply_y(m.row_mut(r));
            }
            return Ok((m, true));
        }
        let d = &self.data()?.train;
        let mut rng = RngStream::new(seed, stream);
        let rows: Vec<usize> = (0..count).map(|_| rng.below(d.n())).collect();
        Ok((d.ys.select_rows(&rows), false))
    }

    fn record(&mut self, stage: Stage, started: Instant, metrics: EvalReport) {
        self.reports.push(StageReport {
            stage,
            metrics,
            runtime_secs: started.elapsed().as_secs_f64(),
        });
    }

    fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let started = Instant::now();
        self.note(format!("[{}]", stage.name()));
        let metrics = match stage {
            Stage::GenData => self.gen_data()?,
            Stage::Train => self.train()?,
            Stage::Sample => self.sample(Integrator::Ode)?,
            Stage::SampleSde => self.sample(Integrator::Sde)?,
            Stage::Distill => self.distill()?,
            Stage::EvalTv => self.eval_tv()?,
            Stage::EvalMoments => self.eval_moments()?,
            Stage::EvalIntervals => self.eval_intervals()?,
            Stage::OracleCheck => self.oracle_check()?,
        };
        self.record(stage, started, metrics);
        Ok(())
    }

    /// Runs `stages` in dependency order and writes the run reports.
    /// Returns the manifest path.
    pub fn run(&mut self, stages: &[Stage]) -> Result<PathBuf> {
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        std::fs::create_dir_all(&self.cfg.output_dir).map_err(|e| Error::io(&self.cfg.output_dir, e))?;
        let resolved = self.out("config.toml");
        let text = toml::to_string(&self.cfg).map_err(|e| Error::Config(e.to_string()))?;
        io::write_text(&resolved, &text)?;
        self.output(resolved);
        for &s in &ordered {
            self.run_stage(s)?;
        }
        write_run(&self.cfg, &ordered, &self.reports, &self.inputs, &self.outputs)
    }

    fn gen_data(&mut self) -> Result<EvalReport> {
        let (train, holdout) = {
            let p = self.data()?;
            let invert = |d: &Dataset| -> Result<Dataset> {
                let (mut xs, mut ys) = (d.xs.clone(), d.ys.clone());
                p.scaling.invert_x(&mut xs);
                p.scaling.invert_y(&mut ys);
                let mut spec = d.spec.clone();
                if p.scaling.x.is_some() {
                    spec.x_bounds = None;
                }
                if p.scaling.y.is_some() {
                    spec.y_bounds = None;
                }
                Ok(Dataset::new(spec, xs, ys)?)
            };
            (invert(&p.train)?, p.holdout.as_ref().map(invert).transpose()?)
        };
        let path = self.out(DATA_FILE);
        io::write_dataset(&path, &train)?;
        self.output(path);
        let mut m = EvalReport::default();
        m.push("train_rows", train.n() as f64, None);
        if let Some(h) = holdout {
            let path = self.out(HOLDOUT_FILE);
            io::write_dataset(&path, &h)?;
            self.output(path);
            m.push("holdout_rows", h.n() as f64, None);
        }
        Ok(m)
    }

    fn train(&mut self) -> Result<EvalReport> {
        let cfg = self.cfg.clone();
        let progress = self.progress;
        let (train, scaling) = {
            let p = self.data()?;
            (p.train.clone(), p.scaling.clone())
        };
        let net = cfg.velocity_net(train.spec.dx, train.spec.dy);
        let tc = cfg.train_config();
        let t0 = Instant::now();
        let outcome = training::train_velocity_with(&train, &net, &tc, |e, l| {
            if progress && (e % 10 == 0 || e + 1 == tc.epochs) {
                eprintln!("  epoch {:>4}  loss {l:.5}  {:.1}s", e + 1, t0.elapsed().as_secs_f64());
            }
        })?;
        let ck = Checkpoint {
            kind: ModelKind::Velocity,
            spec: outcome.model.spec.clone(),
            scaling,
            net: outcome.model.net.clone(),
            stop_time: outcome.model.stop_time,
            seed: cfg.seed,
        };
        let path = self.out(MODEL_FILE);
        checkpoint::save(&ck, &path)?;
        self.output(path);
        let path = self.out(TRACE_FILE);
        io::write_trace(&path, &outcome.trace)?;
        self.output(path);

        let mut m = EvalReport::default();
        let last = outcome.trace.last().copied().unwrap_or(f64::NAN);
        let best = outcome.trace.iter().copied().fold(f64::INFINITY, f64::min);
        m.push("final_loss", last, None);
        m.push("best_loss", best, None);
        m.push("parameters", ck.net.params().len() as f64, None);
        let y_box = train.spec.y_bounds.clone();
        let lip = lipschitz::probe(
            &ck.net,
            &mut RngStream::new(cfg.seed, STREAM_LIPSCHITZ),
            LIPSCHITZ_PROBES,
            cfg.flow.stop_time,
            y_box.as_deref(),
        );
        m.push("lipschitz_x", lip.ratio_x, None);
        if train.spec.dy > 0 {
            m.push("lipschitz_y", lip.ratio_y, None);
        }
        m.push("lipschitz_t", lip.ratio_t, None);
        self.model = Some(ck);
        Ok(m)
    }

    fn sample(&mut self, how: Integrator) -> Result<EvalReport> {
        let flow = self.cfg.flow();
        let count = self.cfg.sample.count;
        let seed = self.cfg.seed;
        let (field, scaling) = self.field()?;
        let (conds, listed) = self.conditions(count, STREAM_JOINT_Y)?;
        if conds.cols() != field.dy() {
            return Err(Error::Config(format!("conditions have {} columns, field expects dy = {}", conds.cols(), field.dy())));
        }
        let stream = match how {
            Integrator::Ode => STREAM_SAMPLE,
            Integrator::Sde => STREAM_SAMPLE_SDE,
        };
        let rng = RngStream::new(seed, stream);
        // listed conditions: `count` rows each, condition c on rng.substream(c)
        let (mut xs, mut ys) = if listed {
            let mut xs = Matrix::zeros(0, field.dx());
            let mut ys = Matrix::zeros(0, conds.cols());
            for c in 0..conds.rows() {
                let s = sample_condition(field.as_ref(), conds.row(c), &flow, count, &rng.substream(c as u64), how)?;
                xs.extend_rows(&s)?;
                let rep: Vec<&[f64]> = (0..count).map(|_| conds.row(c)).collect();
                ys.extend_rows(&Matrix::from_rows(conds.cols(), &rep)?)?;
            }
            (xs, ys)
        } else {
            (sample_joint(field.as_ref(), &conds, &flow, &rng, how)?, conds.clone())
        };

        let mut m = EvalReport::default();
        m.push("samples", xs.rows() as f64, None);
        if how == Integrator::Ode && self.cfg.sample.trajectory && conds.rows() > 0 {
            // the path of sample row 0
            let first = if listed { rng.substream(0).substream(0) } else { rng.substream(0) };
            let z0 = first.clone().gauss_vector(field.dx());
            let mut p = flow::euler_path(field.as_ref(), conds.row(0), &flow, &z0)?;
            scaling.invert_x(&mut p.states);
            let path = self.out(TRAJECTORY_FILE);
            io::write_trajectory(&path, &p)?;
            self.output(path);
        }
        scaling.invert_x(&mut xs);
        scaling.invert_y(&mut ys);
        let file = match how {
            Integrator::Ode => SAMPLES_FILE,
            Integrator::Sde => SDE_SAMPLES_FILE,
        };
        let path = self.out(file);
        io::write_pairs(&path, &xs, &ys)?;
        self.output(path);
        if how == Integrator::Ode {
            self.plot(&xs, &ys)?;
        }
        Ok(m)
    }

    /// Generated samples over the training data in the first two coordinates.
    fn plot(&mut self, xs: &Matrix, ys: &Matrix) -> Result<()> {
        let coords = |x: &Matrix, y: &Matrix| -> Vec<(f64, f64)> {
            (0..x.rows())
                .filter_map(|i| match (x.cols(), y.cols()) {
                    (_, c) if c > 0 => Some((x.get(i, 0), y.get(i, 0))),
                    (c, _) if c >= 2 => Some((x.get(i, 0), x.get(i, 1))),
                    _ => None,
                })
                .collect()
        };
        let fg = coords(xs, ys);
        if fg.is_empty() {
            return Ok(());
        }
        let bg = {
            let p = self.data()?;
            let (mut tx, mut ty) = (p.train.xs.clone(), p.train.ys.clone());
            p.scaling.invert_x(&mut tx);
            p.scaling.invert_y(&mut ty);
            coords(&tx, &ty)
        };
        let path = self.out(SAMPLES_PLOT);
        io::write_text(&path, &scatter_svg("training (grey) and generated (red)", &bg, &fg))?;
        self.output(path);
        Ok(())
    }

    fn distill(&mut self) -> Result<EvalReport> {
        let cfg = self.cfg.clone();
        let flow = cfg.flow();
        let (field, scaling) = self.field()?;
        let (conds, _) = self.conditions(cfg.distill.conditions, STREAM_DISTILL_Y)?;
        let conds = if conds.rows() == 0 { Matrix::zeros(1, field.dy()) } else { conds };
        let gen_cfg = cfg.generator_net(field.dx(), field.dy());
        let out = training::distill(field.as_ref(), &flow, &conds, cfg.distill.pairs, &gen_cfg, &cfg.distill_train_config())?;

        let ck = Checkpoint {
            kind: ModelKind::Generator,
            spec: DataSpec::new(field.dx(), field.dy())?,
            scaling: scaling.clone(),
            net: out.generator.clone(),
            stop_time: cfg.flow.stop_time,
            seed: cfg.seed,
        };
        let path = self.out(GENERATOR_FILE);
        checkpoint::save(&ck, &path)?;
        self.output(path);
        let path = self.out(DISTILL_TRACE_FILE);
        io::write_trace(&path, &out.trace)?;
        self.output(path);

        let mut m = EvalReport::default();
        m.push("train_rmse", out.train_rmse, None);
        m.push("holdout_rmse", out.holdout_rmse, None);

        let y = conds.row(0).to_vec();
        let rng = RngStream::new(cfg.seed, STREAM_GENERATOR);
        let mut g = generator_samples(&out.generator, &y, cfg.sample.count, &rng)?;
        if field.dx() == 1 && cfg.sample.count >= 2 {
            let ode = sample_condition(field.as_ref(), &y, &flow, cfg.sample.count, &RngStream::new(cfg.seed, STREAM_SAMPLE), Integrator::Ode)?;
            m.push("w2_vs_ode", w2_1d(g.as_slice(), ode.as_slice())?, None);
        }
        scaling.invert_x(&mut g);
        let mut ys = Matrix::from_rows(y.len(), &vec![y.as_slice(); g.rows()])?;
        scaling.invert_y(&mut ys);
        let path = self.out(GENERATOR_SAMPLES_FILE);
        io::write_pairs(&path, &g, &ys)?;
        self.output(path);
        self.generator = Some(ck);
        Ok(m)
    }

    fn eval_tv(&mut self) -> Result<EvalReport> {
        let cfg = self.cfg.clone();
        let shape = cfg.shape()?;
        let (field, _) = self.field()?;
        let r = eval_tv(
            field.as_ref(),
            shape,
            &cfg.flow(),
            cfg.eval.conditions,
            cfg.eval.samples_per_condition,
            cfg.eval.sampler.into(),
            cfg.seed,
        )?;
        let mut text = String::from("condition,y,tv\n");
        for (c, (y, tv)) in r.conditions.iter().zip(&r.tv).enumerate() {
            text.push_str(&format!("{c},{},{}\n", io::fmt_f64(*y), io::fmt_f64(*tv)));
        }
        let path = self.out(TV_FILE);
        io::write_text(&path, &text)?;
        self.output(path);
        let (mean, sd) = mean_std(&r.tv);
        let mut m = EvalReport::default();
        m.push("tv", mean, Some(sd));
        m.push("conditions", r.tv.len() as f64, None);
        m.push("kde_references", r.kde_references as f64, None);
        Ok(m)
    }

    fn eval_moments(&mut self) -> Result<EvalReport> {
        let cfg = self.cfg.clone();
        let model = cfg.regression_model()?;
        let (field, scaling) = self.field()?;
        let r = eval_moments(
            field.as_ref(),
            model,
            &scaling,
            &cfg.flow(),
            cfg.eval.conditions,
            cfg.eval.samples_per_condition,
            cfg.eval.sampler.into(),
            cfg.seed,
        )?;
        let dy = model.dy();
        let ycols: Vec<String> = (0..dy).map(|j| format!("y{j}")).collect();
        let mut text = format!("condition,{},mean,std,true_mean,true_std\n", ycols.join(","));
        for c in 0..r.estimates.len() {
            let y: Vec<String> = r.conditions.row(c).iter().map(|&v| io::fmt_f64(v)).collect();
            let (e, t) = (r.estimates[c], r.truths[c]);
            text.push_str(&format!(
                "{c},{},{},{},{},{}\n",
                y.join(","),
                io::fmt_f64(e.0),
                io::fmt_f64(e.1),
                io::fmt_f64(t.0),
                io::fmt_f64(t.1)
            ));
        }
        let path = self.out(MOMENTS_FILE);
        io::write_text(&path, &text)?;
        self.output(path);
        let mut m = EvalReport::default();
        m.push("mse1", r.mse1, None);
        m.push("mse2", r.mse2, None);
        Ok(m)
    }

    fn eval_intervals(&mut self) -> Result<EvalReport> {
        let cfg = self.cfg.clone();
        let (field, scaling) = self.field()?;
        let (cases_y, truths) = match cfg.data.source {
            Source::Regression => regression_cases(cfg.regression_model()?, cfg.eval.conditions, cfg.seed)?,
            _ => {
                let p = self.data()?;
                let h = p.holdout.as_ref().ok_or_else(|| Error::Config("no held-out rows".into()))?;
                let (mut xs, mut ys) = (h.xs.clone(), h.ys.clone());
                p.scaling.invert_x(&mut xs);
                p.scaling.invert_y(&mut ys);
                if xs.cols() != 1 {
                    return Err(Error::Config("prediction intervals need dx = 1".into()));
                }
                (ys, xs.into_vec())
            }
        };
        let reports = eval_intervals(
            field.as_ref(),
            &cases_y,
            &truths,
            &scaling,
            &cfg.flow(),
            cfg.eval.samples_per_condition,
            &cfg.eval.alpha,
            cfg.eval.sampler.into(),
            cfg.seed,
        )?;
        let mut text = String::from("case,alpha,lower,upper,truth,hit\n");
        let mut m = EvalReport::default();
        for r in &reports {
            for (c, case) in r.cases.iter().enumerate() {
                text.push_str(&format!(
                    "{c},{},{},{},{},{}\n",
                    r.alpha,
                    io::fmt_f64(case.lower),
                    io::fmt_f64(case.upper),
                    io::fmt_f64(case.truth),
                    u8::from(case.hit)
                ));
            }
            let widths: Vec<f64> = r.cases.iter().map(|c| c.upper - c.lower).collect();
            m.push(coverage_metric(r.alpha), r.coverage, None);
            let (w, sd) = mean_std(&widths);
            m.push(format!("width_{}", 1.0 - r.alpha), w, Some(sd));
        }
        m.push("cases", truths.len() as f64, None);
        let path = self.out(INTERVALS_FILE);
        io::write_text(&path, &text)?;
        self.output(path);
        Ok(m)
    }

    fn oracle_check(&mut self) -> Result<EvalReport> {
        let (probes, t, seed) = (self.cfg.eval.oracle_probes, self.cfg.flow.stop_time, self.cfg.seed);
        let c = self_check(self.target()?, probes, t, &mut RngStream::new(seed, STREAM_ORACLE_CHECK))?;
        let mut m = EvalReport::default();
        m.push("probes", c.probes as f64, None);
        m.push("score_rel_err", c.score_rel_err, None);
        m.push("t0_err", c.t0_err, None);
        m.push("lipschitz_ratio", c.lipschitz_ratio, None);
        m.push("lipschitz_bound", c.lipschitz_bound, None);
        if let Some(b) = c.bound_ratio {
            m.push("sup_bound_ratio", b, None);
        }
        m.push("pass", if c.passes(1e-4, 1e-4) { 1.0 } else { 0.0 }, None);
        Ok(m)
    }
}

/// `count` one-step draws `G(z, y)`, `z` from `rng.substream(i)`.
pub fn generator_samples(generator: &Mlp, y: &[f64], count: usize, rng: &RngStream) -> Result<Matrix> {
    Ok(flow::one_step_generate(generator, y, count, rng)?)
}

/// Loads a velocity checkpoint as a sampler-ready field.
pub fn load_velocity(path: &Path) -> Result<(VelocityModel, ScalingRecord)> {
    let c = checkpoint::load(path)?;
    if c.kind != ModelKind::Velocity {
        return Err(Error::Config(format!("{} is not a velocity checkpoint", path.display())));
    }
    Ok((
        VelocityModel {
            net: c.net,
            spec: c.spec,
            stop_time: c.stop_time,
        },
        c.scaling,
    ))
}
