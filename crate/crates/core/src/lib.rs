#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![doc = include_str!("../README.md")]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod linalg;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use data::{interpolant, DataSpec, Dataset, FlowConfig};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nn::{Mlp, MlpConfig, TimeInput};
pub use oracle::{self_check, Atom, AtomMixture, DiscreteConditionalTarget, OracleCheck};
pub use rng::{gauss_vector, RngStream};
pub use flow::{euler_sample, one_step_generate, sample_batch, sde_sample, SamplePath, VelocityField};
pub use training::{distill, make_batch, train_velocity, TrainConfig, VelocityModel};
