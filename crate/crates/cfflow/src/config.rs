//! Experiment configuration (TOML) with dotted-key overrides.

use std::path::{Path, PathBuf};

use cfflow_core::nn::{AdamConfig, MlpConfig, TimeInput, DEFAULT_HIDDEN};
use cfflow_core::synthdata::{RegressionModel, Shape};
use cfflow_core::training::TrainConfig;
use cfflow_core::FlowConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_ENV: &str = "CFFLOW_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    Train,
    Sample,
    SampleSde,
    Distill,
    EvalTv,
    EvalMoments,
    EvalIntervals,
    OracleCheck,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Train => "train",
            Stage::Sample => "sample",
            Stage::SampleSde => "sample-sde",
            Stage::Distill => "distill",
            Stage::EvalTv => "eval-tv",
            Stage::EvalMoments => "eval-moments",
            Stage::EvalIntervals => "eval-intervals",
            Stage::OracleCheck => "oracle-check",
        }
    }

    /// Stages whose velocity field can come from a trained checkpoint.
    pub fn uses_model(self) -> bool {
        matches!(
            self,
            Stage::Sample | Stage::SampleSde | Stage::Distill | Stage::EvalTv | Stage::EvalMoments | Stage::EvalIntervals
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Shape,
    Regression,
    Csv,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    /// The trained network.
    Model,
    /// The closed-form velocity of an oracle target.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Ode,
    Sde,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "defaults::source")]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<usize>,
    #[serde(default)]
    pub scale: bool,
    /// Fraction of CSV rows held out for interval evaluation.
    #[serde(default)]
    pub holdout_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: Source::Shape,
            shape: None,
            model: None,
            path: None,
            target: None,
            n: defaults::n(),
            dx: None,
            dy: None,
            scale: false,
            holdout_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    /// `0` feeds raw `t`; `k > 0` appends `k` sin/cos frequency pairs.
    #[serde(default)]
    pub time_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_cap: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: defaults::hidden(),
            time_features: 0,
            output_cap: None,
            weight_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::one")]
    pub draws_per_example: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: defaults::epochs(),
            batch_size: defaults::batch(),
            lr: defaults::lr(),
            draws_per_example: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Shared by training (`t ~ U(0, T)`) and every sampler.
    #[serde(default = "defaults::stop_time")]
    pub stop_time: f64,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            stop_time: defaults::stop_time(),
            steps: defaults::steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Samples per listed condition, or total joint samples when no
    /// conditions are listed.
    #[serde(default = "defaults::count")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<Vec<f64>>>,
    #[serde(default = "defaults::field")]
    pub field: FieldChoice,
    /// Also dump the trajectory of the first sample.
    #[serde(default)]
    pub trajectory: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            count: defaults::count(),
            conditions: None,
            field: FieldChoice::Model,
            trajectory: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    #[serde(default = "defaults::pairs")]
    pub pairs: usize,
    #[serde(default = "defaults::gen_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "defaults::distill_epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    /// Distinct conditions drawn from the data when none are listed.
    #[serde(default = "defaults::distill_conditions")]
    pub conditions: usize,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            pairs: defaults::pairs(),
            hidden: defaults::gen_hidden(),
            epochs: defaults::distill_epochs(),
            batch_size: defaults::batch(),
            lr: defaults::lr(),
            conditions: defaults::distill_conditions(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "defaults::eval_conditions")]
    pub conditions: usize,
    #[serde(default = "defaults::per_condition")]
    pub samples_per_condition: usize,
    #[serde(default = "defaults::alphas")]
    pub alpha: Vec<f64>,
    #[serde(default = "defaults::sampler")]
    pub sampler: Sampler,
    #[serde(default = "defaults::probes")]
    pub oracle_probes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            conditions: defaults::eval_conditions(),
            samples_per_condition: defaults::per_condition(),
            alpha: defaults::alphas(),
            sampler: Sampler::Ode,
            oracle_probes: defaults::probes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub eval: EvalSection,
}

mod defaults {
    use super::*;
    pub fn source() -> Source {
        Source::Shape
    }
    pub fn n() -> usize {
        5000
    }
    pub fn hidden() -> Vec<usize> {
        DEFAULT_HIDDEN.to_vec()
    }
    pub fn epochs() -> usize {
        200
    }
    pub fn batch() -> usize {
        128
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn one() -> usize {
        1
    }
    pub fn stop_time() -> f64 {
        0.99
    }
    pub fn steps() -> usize {
        100
    }
    pub fn count() -> usize {
        1000
    }
    pub fn field() -> FieldChoice {
        FieldChoice::Model
    }
    pub fn pairs() -> usize {
        10_000
    }
    pub fn gen_hidden() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn distill_epochs() -> usize {
        100
    }
    pub fn distill_conditions() -> usize {
        64
    }
    pub fn eval_conditions() -> usize {
        1000
    }
    pub fn per_condition() -> usize {
        200
    }
    pub fn alphas() -> Vec<f64> {
        vec![0.1, 0.05, 0.01]
    }
    pub fn sampler() -> Sampler {
        Sampler::Ode
    }
    pub fn probes() -> usize {
        1000
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("cfflow-out")
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

/// Sets `a.b.c = value` in a TOML table; `value` is parsed as a TOML
/// literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults), applies overrides, then the
    /// output-directory environment override, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Self::load_with(path, overrides, |_| {})
    }

    /// As [`load`](Self::load), with `adjust` applied just before validation.
    pub fn load_with(path: Option<&Path>, overrides: &[String], adjust: impl FnOnce(&mut Self)) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            if !dir.is_empty() {
                cfg.output_dir = PathBuf::from(dir);
            }
        }
        if let Some(base) = path.and_then(Path::parent) {
            cfg.resolve_relative(base);
        }
        adjust(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Data paths in a config file are relative to the file.
    fn resolve_relative(&mut self, base: &Path) {
        for p in [&mut self.data.path, &mut self.data.target].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn shape(&self) -> Result<Shape> {
        Ok(Shape::from_name(self.data.shape.as_deref().unwrap_or("checkerboard"))?)
    }

    pub fn regression_model(&self) -> Result<RegressionModel> {
        let name = self.data.model.as_deref().ok_or_else(|| Error::Config("data.model is required".into()))?;
        Ok(RegressionModel::from_name(name)?)
    }

    /// `(dx, dy)` implied by the data source, when known without reading files.
    pub fn dims(&self) -> Result<Option<(usize, usize)>> {
        Ok(match self.data.source {
            Source::Shape => Some((1, 1)),
            Source::Regression => Some((1, self.regression_model()?.dy())),
            Source::Csv => match (self.data.dx, self.data.dy) {
                (Some(dx), Some(dy)) => Some((dx, dy)),
                _ => return Err(Error::Config("csv source needs data.dx and data.dy".into())),
            },
            Source::Oracle => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        match self.data.source {
            Source::Shape => {
                self.shape()?;
            }
            Source::Regression => {
                self.regression_model()?;
            }
            Source::Csv => {
                let p = self.data.path.as_ref().ok_or_else(|| Error::Config("csv source needs data.path".into()))?;
                if !p.is_file() {
                    return fail(format!("data file {} does not exist", p.display()));
                }
            }
            Source::Oracle => {}
        }
        if let Some(t) = &self.data.target {
            if !t.is_file() {
                return fail(format!("target file {} does not exist", t.display()));
            }
        }
        if self.data.source == Source::Oracle && self.data.target.is_none() && self.stages.iter().any(|s| *s != Stage::OracleCheck) {
            return fail("oracle source needs data.target".into());
        }
        if let Some((dx, dy)) = self.dims()? {
            if dx == 0 {
                return fail("dx must be ≥ 1".into());
            }
            if let Some(cs) = &self.sample.conditions {
                if let Some(c) = cs.iter().find(|c| c.len() != dy) {
                    return fail(format!("sample condition {c:?} has length {}, data has dy = {dy}", c.len()));
                }
            }
        }
        if !(self.data.holdout_fraction >= 0.0 && self.data.holdout_fraction < 1.0) {
            return fail("data.holdout_fraction must lie in [0, 1)".into());
        }
        if self.data.n == 0 {
            return fail("data.n must be ≥ 1".into());
        }
        FlowConfig::new(self.flow.stop_time, self.flow.steps)?;
        self.train_config().validate()?;
        if self.sample.count == 0 {
            return fail("sample.count must be ≥ 1".into());
        }
        if self.eval.samples_per_condition < 2 || self.eval.conditions == 0 {
            return fail("eval needs ≥ 1 condition and ≥ 2 samples per condition".into());
        }
        if let Some(a) = self.eval.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return fail(format!("eval.alpha {a} outside (0, 1)"));
        }
        if self.stages.contains(&Stage::EvalTv) && self.data.source != Source::Shape {
            return fail("eval-tv needs a shape data source".into());
        }
        if self.stages.contains(&Stage::EvalMoments) && self.data.source != Source::Regression {
            return fail("eval-moments needs a regression data source".into());
        }
        if self.stages.contains(&Stage::EvalIntervals) {
            let ok = self.data.source == Source::Regression || (self.data.source == Source::Csv && self.data.holdout_fraction > 0.0);
            if !ok {
                return fail("eval-intervals needs a regression source or a csv source with data.holdout_fraction > 0".into());
            }
        }
        if self.sample.field == FieldChoice::Oracle && self.data.target.is_none() {
            return fail("sample.field = \"oracle\" needs data.target".into());
        }
        Ok(())
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig::new(self.flow.stop_time, self.flow.steps).expect("validated")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            draws_per_example: self.train.draws_per_example,
            stop_time: self.flow.stop_time,
            adam: AdamConfig {
                lr: self.train.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
        }
    }

    pub fn velocity_net(&self, dx: usize, dy: usize) -> MlpConfig {
        let mut c = MlpConfig::velocity(dx, dy).with_hidden(self.network.hidden.clone());
        c.time = TimeInput::from_feature_count(self.network.time_features);
        c.output_cap = self.network.output_cap;
        c.weight_cap = self.network.weight_cap;
        c
    }

    pub fn generator_net(&self, dx: usize, dy: usize) -> MlpConfig {
        MlpConfig::generator(dx, dy, self.distill.hidden.clone())
    }

    pub fn distill_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.distill.epochs,
            batch_size: self.distill.batch_size,
            draws_per_example: 1,
            stop_time: self.flow.stop_time,
            adam: AdamConfig {
                lr: self.distill.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical serialization, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
