use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} is outside the admissible range {range}")]
    TimeOutOfRange { t: f64, range: &'static str },

    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("velocity field returned a non-finite value at t = {t} (|z| = {norm})")]
    NonFiniteField { t: f64, norm: f64 },

    #[error("non-finite gradient entry at parameter index {index}")]
    NonFiniteGradient { index: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("samples have zero spread; bandwidth undefined")]
    DegenerateSamples,

    #[error("unknown {kind} name `{name}`")]
    UnknownName { kind: &'static str, name: String },
}
